"""Event-driven limit-order-book market-making laboratory."""

__version__ = "0.1.0"

from .actions import (
    CloseOut,
    ContinuousAction,
    DiscreteAction,
    MINIMUM_TRADE_UNIT,
    QuoteAction,
    QuotePair,
    enforce_position_limit,
    resolve_continuous,
    resolve_discrete,
)
from .book import (
    BookSnapshot,
    EventKind,
    LobWindow,
    MarketEvent,
    OrderBook,
    Side,
    SnapshotHistory,
    snapshot_window,
)
from .features import (
    AgentStateVec,
    DynamicState,
    FeatureEngine,
    OsiCategory,
    OsiMode,
    osi,
    realized_volatility,
    rsi,
)
from .ingest import (
    EventFileHeader,
    LabeledSample,
    NormStats,
    SyntheticMarketConfig,
    export_dataset,
    generate_synthetic,
    label_windows,
    normalize_window,
    parse_events,
    read_event_file,
    write_events,
)
from .metrics import EpisodeReport, nd_pnl, pnl_map, profit_ratio, sharpe
from .rewards import (
    RewardBreakdown,
    dampened_pnl,
    delta_pnl,
    hybrid_reward,
    inventory_punishment,
    trading_pnl,
)
from .sim import (
    EpisodeConfig,
    ExchangeSimulator,
    Fill,
    StepOutcome,
    close_out_fills,
    run_episode,
    run_latency_sweep,
)
from .strategies import (
    ASParams,
    AvellanedaStoikov,
    FixedQuoting,
    LinearQ,
    LinearQParams,
    RandomQuoting,
    as_quotes,
    estimate_sigma,
    train_linear_q,
)
