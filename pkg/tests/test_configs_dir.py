from pathlib import Path

import numpy as np
import pytest

from discom.config import ExperimentSpec, load_yaml, validate_config
from discom.env import Rotation, audit_drift, audit_similarity

CONFIGS = sorted((Path(__file__).parent.parent / "configs").glob("*.yaml"))


@pytest.mark.parametrize("path", CONFIGS, ids=[p.stem for p in CONFIGS])
def test_shipped_config_is_valid(path):
    spec = ExperimentSpec.from_dict(load_yaml(path))
    for point in spec.points() or [{}]:
        cfg = spec.config_at(point, spec.seeds[0])
        assert [d for d in validate_config(cfg.to_dict()) if d.level == "error"] == []
        rel = cfg.env.relevance
        rng = np.random.default_rng(0)
        assert audit_similarity(rel, cfg.env.d, 10_000, rng) <= 1e-9
        if isinstance(rel.drift, Rotation):
            assert audit_drift(rel, cfg.env.d, 10_000, rng, cfg.horizon) <= 1e-9
