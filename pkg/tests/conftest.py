import hashlib
import json
import time
from dataclasses import asdict
from pathlib import Path

import pytest

import igae
from igae.checkpoint import load_autoencoder, save_autoencoder
from igae.experiments import BaselineSettings, baseline_config, train_baseline
from igae.pipelines import build_datasets


def _source_digest() -> str:
    h = hashlib.sha256()
    for p in sorted(Path(igae.__file__).parent.glob("*.py")):
        h.update(p.read_bytes())
    return h.hexdigest()[:16]


@pytest.fixture(scope="session")
def baseline(request):
    """The trained baseline AE shared by the slow tests: (ae, datasets, train_seconds).

    Cached under the pytest cache keyed by settings and package source, so a
    code change retrains it. ``pytest --cache-clear`` forces a fresh run.
    """
    bs = BaselineSettings()
    key = hashlib.sha256(json.dumps([asdict(bs), _source_digest()]).encode()).hexdigest()[:16]
    path = request.config.cache.mkdir("igae-baseline") / f"ae_{key}.ckpt"
    data = build_datasets(baseline_config(bs))
    if path.exists():
        ae, _ = load_autoencoder(path)
        return ae, data, 0.0
    t0 = time.perf_counter()
    ae, _ = train_baseline(bs, data)
    took = time.perf_counter() - t0
    save_autoencoder(path, ae)
    return ae, data, took
