"""Intraday order-transition analysis of limit order book event streams.

Parse tick feeds into per-time-zone event sequences, fit first-order Markov
chains, test sequence dependence, compare stationary laws with the
Jensen-Shannon distance and cluster the fitted matrices with PCA + DBSCAN.
"""

from .cluster import ClusterLabels, DbscanParams, dbscan, k_distance
from .divergence import js_distance, jsd, jsd_matrix, kld
from .domain import DEFAULT_CATEGORIES, DEFAULT_ZONES, OrderKind, OrderEvent, TimeZoneSpec
from .dtmc import (
    Classification,
    CountMatrix,
    StationaryDistribution,
    TransitionMatrix,
    accumulate,
    average,
    classify,
    degree_of_inertia,
    estimate,
    stationary,
)
from .embed import ObservationMatrix, PcaResult, cumulative_gate, normalize, observations, pca
from .errors import ConfigError, DataError, OrderTransitError
from .gtest import GTestResult, build_table, cramers_v, g_statistic, g_test
from .ingest import ParseReport, SymbolSequence, parse_stream, segment, tally
from .synth import SynthManifest, simulate

__version__ = "0.1.0"
