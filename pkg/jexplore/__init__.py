from .analysis import (
    AnalysisReport,
    EmcCutoffReport,
    analyze,
    emc_cutoff_report,
    pareto_front,
    spearman,
)
from .client import ClientSettings, JClient, SampleExecutor, ServeSummary, serve
from .exceptions import (
    AllClientsLostException,
    AnalysisArgumentException,
    AnalysisException,
    ApplyNotSupportedException,
    ClientIncompatibleException,
    CsvException,
    CsvRowException,
    CsvSchemaException,
    DeviceException,
    FrameParseException,
    FrameTooLargeException,
    HostException,
    IncompleteFrameException,
    IndexRangeException,
    InsufficientDataException,
    JExploreException,
    MeasurementTimeoutException,
    MembershipException,
    MetricMissingException,
    NoClientsException,
    ProtocolException,
    ProtocolVersionException,
    RemoteErrorException,
    SearchExhaustedException,
    SequenceException,
    SpaceDefinitionException,
    SpaceException,
    UnknownMessageTypeException,
    WorkloadException,
)
from .host import ExplorationPlan, JHost, SearchPlan, explore, explore_in_process
from .measurement import MeasurementSet, Meter, WorkloadRunner, measure_run
from .model import (
    Configuration,
    MessageEnvelope,
    MessageType,
    MeterSet,
    SampleRecord,
    WorkloadSpec,
)
from .protocol import Connection, decode_frame, encode_frame
from .records import CSV_COLUMNS, read_csv, write_csv
from .search import (
    EvolutionarySearch,
    RandomSearch,
    SearchAlgorithm,
    create_algorithm,
    hypervolume,
    nondominated_sort,
    register_algorithm,
)
from .simdevice import (
    PRESETS,
    DeviceModel,
    SimDevice,
    WorkloadPreset,
    apply_config,
    sim_latency,
    sim_memory,
    sim_power,
)
from .space import (
    ConfigSpace,
    ParameterDef,
    SplitMix64,
    build_orin_space,
    cardinality,
    decode_index,
    encode_index,
    random_sample,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "ConfigSpace",
    "ParameterDef",
    "Configuration",
    "SplitMix64",
    "build_orin_space",
    "cardinality",
    "encode_index",
    "decode_index",
    "random_sample",
    "MessageType",
    "MessageEnvelope",
    "encode_frame",
    "decode_frame",
    "Connection",
    "MeterSet",
    "MeasurementSet",
    "Meter",
    "WorkloadRunner",
    "measure_run",
    "WorkloadPreset",
    "DeviceModel",
    "PRESETS",
    "SimDevice",
    "sim_latency",
    "sim_power",
    "sim_memory",
    "apply_config",
    "ClientSettings",
    "ServeSummary",
    "SampleExecutor",
    "JClient",
    "serve",
    "WorkloadSpec",
    "SampleRecord",
    "SearchPlan",
    "ExplorationPlan",
    "JHost",
    "explore",
    "explore_in_process",
    "CSV_COLUMNS",
    "write_csv",
    "read_csv",
    "SearchAlgorithm",
    "RandomSearch",
    "EvolutionarySearch",
    "register_algorithm",
    "create_algorithm",
    "nondominated_sort",
    "hypervolume",
    "AnalysisReport",
    "EmcCutoffReport",
    "pareto_front",
    "spearman",
    "emc_cutoff_report",
    "analyze",
    "JExploreException",
    "SpaceException",
    "MembershipException",
    "IndexRangeException",
    "SpaceDefinitionException",
    "ProtocolException",
    "FrameTooLargeException",
    "IncompleteFrameException",
    "FrameParseException",
    "UnknownMessageTypeException",
    "ProtocolVersionException",
    "SequenceException",
    "RemoteErrorException",
    "DeviceException",
    "ApplyNotSupportedException",
    "WorkloadException",
    "MeasurementTimeoutException",
    "CsvException",
    "CsvSchemaException",
    "CsvRowException",
    "HostException",
    "NoClientsException",
    "ClientIncompatibleException",
    "AllClientsLostException",
    "SearchExhaustedException",
    "AnalysisException",
    "InsufficientDataException",
    "AnalysisArgumentException",
    "MetricMissingException",
]
