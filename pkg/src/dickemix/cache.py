"""Content-addressed store of per-sector steady-state moments.

One JSON file per (params, sector, method, tolerances); writes go through a
temporary file and an atomic rename, so concurrent workers never see a
partial record.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Optional

from .io import read_json, write_json
from .model import ModelParams
from .subspace import SubspaceMoments


def param_hash(params: ModelParams, **extra) -> str:
    payload = dict(params.as_dict(), **extra)
    blob = json.dumps(payload, sort_keys=True, default=repr).encode()
    return hashlib.sha256(blob).hexdigest()


class MomentCache:
    def __init__(self, root):
        self.root = Path(root)

    def key(self, params: ModelParams, two_s: int, method: str, tolerances: dict) -> str:
        return param_hash(params, two_s=two_s, method=method, tol=dict(sorted(tolerances.items())))

    def _path(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.json"

    def get(self, params, two_s, method, tolerances) -> Optional[SubspaceMoments]:
        path = self._path(self.key(params, two_s, method, tolerances))
        if not path.exists():
            return None
        rec = read_json(path)["moments"]
        if rec["residual"] is None:
            rec["residual"] = float("nan")
        return SubspaceMoments(**rec)

    def put(self, params, moments: SubspaceMoments, tolerances) -> Path:
        key = self.key(params, moments.two_s, moments.method, tolerances)
        rec = {"params": params.as_dict(), "tolerances": tolerances,
               "moments": {
                   "two_s": moments.two_s, "sz_mean": moments.sz_mean,
                   "sz2_mean": moments.sz2_mean, "photon_mean": moments.photon_mean,
                   "fock_cutoff_used": moments.fock_cutoff_used,
                   "converged": moments.converged, "residual": moments.residual,
                   "method": moments.method, "n_atoms": moments.n_atoms}}
        return write_json(self._path(key), rec)
