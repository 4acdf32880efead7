"""scenprice: price a derivative in many future scenarios from one set of
risk-neutral simulations plus a smoothing step, instead of nested Monte
Carlo per scenario."""

__version__ = "0.1.0"

from .errors import ScenpriceError  # noqa: F401
from .grids import TimeGrid  # noqa: F401
from .scenarios import (  # noqa: F401
    GbmParams,
    ScenarioKind,
    ScenarioSet,
    generate_gbm_dispersed,
    generate_gbm_fixed,
    generate_gbm_forked,
    import_physical,
    import_scenarios,
    validate_alignment,
)
from .products import (  # noqa: F401
    ForkInitializer,
    PathStateTable,
    ProductKind,
    ProductSpec,
    compute_cashflows,
    compute_state_table,
    init_state,
    update_state,
)
from .valuation import (  # noqa: F401
    DiscountBase,
    DiscountModel,
    ValueTable,
    accumulate_remaining_value,
    discount_factor,
)
from .smoothing import (  # noqa: F401
    BasisSpec,
    SampleSet,
    Smoother,
    SmootherKind,
    build_sample_set,
    fit,
    fit_kernel,
    fit_polynomial,
    load_smoother,
    save_smoother,
)
from .oracle import (  # noqa: F401
    NestedMcConfig,
    black_scholes_call,
    black_scholes_put,
    compare,
    nested_mc_price,
)
from .risk import (  # noqa: F401
    PnlDistribution,
    conditional_value_at_risk,
    std_dev,
    value_at_risk,
)
from .engine import (  # noqa: F401
    PriceTable,
    load_run,
    persist_run,
    refit_from_artifact,
    run_pipeline,
)
from .config import parse_config  # noqa: F401
