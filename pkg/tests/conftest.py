import os

# Single-threaded BLAS: the engine's GEMMs are small enough that thread
# sync costs more than it saves, and it keeps results bit-reproducible.
# Must happen before numpy is first imported.
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")

from hypothesis import HealthCheck, settings  # noqa: E402

settings.register_profile(
    "botgrid",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("botgrid")
