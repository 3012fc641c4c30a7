# Fixed point toolkit: C*-algebra-valued b-metric spaces with a graph
