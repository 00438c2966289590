from .engine import (
    SimOutcome,
    SimParams,
    duality_gap,
    extinction_times,
    hit_indicators,
    run_lazy,
    run_next_event,
)
from .graphical import (
    EventStream,
    build_event_stream,
    run_on_stream,
    trace_realization_probability,
)
