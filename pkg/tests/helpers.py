import numpy as np

from magnet.mhagnn import GraphInput


def random_graph(rng, n_nodes=10, n_edges=None, d_in=100, isolated=0, label=None):
    """Random featurised graph covering all granularities and edge kinds.

    The last `isolated` rows receive no edges at all.
    """
    n_edges = 2 * n_nodes if n_edges is None else n_edges
    gran = rng.integers(0, 3, size=n_nodes)
    gran[:3] = [0, 1, 2]
    linked = n_nodes - isolated
    src = rng.integers(0, linked, size=n_edges)
    dst = rng.integers(0, linked, size=n_edges)
    kind = np.arange(n_edges) % 4
    order = np.lexsort((kind, src, dst))
    return GraphInput(
        x0=rng.standard_normal((n_nodes, d_in)),
        gran=gran.astype(np.intp),
        src=src[order].astype(np.intp), dst=dst[order].astype(np.intp),
        kind=kind[order].astype(np.intp),
        node_ids=np.arange(n_nodes, dtype=np.intp),
        label=int(rng.integers(0, 2)) if label is None else label,
    )
