"""Compositional vector quantizers: PQ, OPQ, AQ/APQ and stacked quantizers."""

from .aq import AQConfig, apq_train, aq_codebook_update, aq_encode, aq_train, beam_search_encode
from .api import METHODS, encode, train
from .core import (
    BLOCK,
    FULL,
    CodebookStack,
    Model,
    StructureError,
    quantization_error,
    reconstruct,
    sqdist,
)
from .io import (
    FormatError,
    load_model,
    read_bvecs,
    read_codes,
    read_fvecs,
    read_ivecs,
    save_model,
    write_bvecs,
    write_codes,
    write_fvecs,
    write_ivecs,
)
from .kernels import BACKEND
from .kmeans import KMeansConfig, assign, kmeans_train, update_centroids
from .opq import OPQConfig, opq_train, procrustes_rotation
from .pq import PQConfig, pq_encode, pq_train
from .search import (
    QueryTables,
    adc_scan,
    build_query_tables,
    code_norms,
    exact_knn,
    recall_at_n,
    search,
)
from .sq import SQConfig, sq_encode, sq_init, sq_refine, sq_train

__version__ = "0.1.0"
