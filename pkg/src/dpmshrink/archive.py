"""Self-describing posterior archive with byte-reproducible serialization.

The archive is a ZIP container holding a JSON header (format version,
configuration echo, normalization state, draw metadata) and one ``.npy``
entry per array. Entries are stored uncompressed with a fixed timestamp so
that identical runs produce identical bytes.
"""

from __future__ import annotations

import io
import json
import zipfile

import numpy as np

from .data import NormState
from .errors import DataError
from .model import PosteriorDraws

FORMAT_VERSION = "dpmshrink-archive-1"
_EPOCH = (1980, 1, 1, 0, 0, 0)


def _write_npy(zf: zipfile.ZipFile, name: str, arr: np.ndarray) -> None:
    buf = io.BytesIO()
    np.lib.format.write_array(buf, np.ascontiguousarray(arr), version=(1, 0))
    info = zipfile.ZipInfo(f"arrays/{name}.npy", date_time=_EPOCH)
    zf.writestr(info, buf.getvalue())


def _read_npy(zf: zipfile.ZipFile, name: str) -> np.ndarray:
    with zf.open(f"arrays/{name}.npy") as fh:
        return np.lib.format.read_array(io.BytesIO(fh.read()))


def save_archive(
    path,
    draws: PosteriorDraws,
    norm_state: NormState | None,
    config_echo: dict | None = None,
) -> None:
    """Serialize draws plus normalization state and a configuration echo."""
    k_sizes = np.array([len(mu) for mu in draws.mu], dtype=np.int64)
    header = {
        "format": FORMAT_VERSION,
        "meta": draws.meta,
        "config": config_echo or {},
        "norm_state": None,
        "has_covariate_params": draws.m is not None,
        "has_baseline_hyper": draws.normal_eta is not None,
        "has_trace": draws.trace is not None,
    }
    if norm_state is not None:
        header["norm_state"] = {
            "x_mean": norm_state.x_mean.tolist(),
            "x_sd": norm_state.x_sd.tolist(),
            "y_mean": norm_state.y_mean,
            "y_sd": norm_state.y_sd,
        }
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        info = zipfile.ZipInfo("meta.json", date_time=_EPOCH)
        zf.writestr(info, json.dumps(header, sort_keys=True, indent=1))
        _write_npy(zf, "labels", np.stack(draws.labels).astype(np.int32))
        _write_npy(zf, "k_sizes", k_sizes)
        _write_npy(zf, "mu", np.concatenate(draws.mu))
        _write_npy(zf, "beta", np.vstack(draws.beta))
        if draws.m is not None:
            _write_npy(zf, "m", np.vstack(draws.m))
            _write_npy(zf, "tau", np.vstack(draws.tau))
        _write_npy(zf, "sigma2", draws.sigma2)
        _write_npy(zf, "alpha", draws.alpha)
        if draws.normal_eta is not None:
            _write_npy(zf, "normal_eta", np.stack(draws.normal_eta))
            _write_npy(zf, "normal_sigma_chol", np.stack(draws.normal_sigma_chol))
        if draws.trace is not None:
            for key, arr in draws.trace.items():
                _write_npy(zf, f"trace_{key}", np.asarray(arr))


def load_archive(path):
    """Read an archive back into (draws, norm_state, config_echo)."""
    try:
        zf = zipfile.ZipFile(path, "r")
    except (OSError, zipfile.BadZipFile) as exc:
        raise DataError(f"cannot open archive {path}: {exc}") from None
    with zf:
        try:
            header = json.loads(zf.read("meta.json"))
        except KeyError:
            raise DataError(f"{path}: missing meta.json; not a posterior archive")
        if header.get("format") != FORMAT_VERSION:
            raise DataError(
                f"{path}: unsupported archive format {header.get('format')!r}"
            )
        labels = _read_npy(zf, "labels").astype(np.int64)
        k_sizes = _read_npy(zf, "k_sizes")
        bounds = np.concatenate([[0], np.cumsum(k_sizes)])
        mu_cat = _read_npy(zf, "mu")
        beta_cat = _read_npy(zf, "beta")
        spans = [slice(bounds[s], bounds[s + 1]) for s in range(len(k_sizes))]
        mu = [mu_cat[sp] for sp in spans]
        beta = [beta_cat[sp] for sp in spans]
        m = tau = None
        if header["has_covariate_params"]:
            m_cat = _read_npy(zf, "m")
            tau_cat = _read_npy(zf, "tau")
            m = [m_cat[sp] for sp in spans]
            tau = [tau_cat[sp] for sp in spans]
        eta = sigma_chol = None
        if header["has_baseline_hyper"]:
            eta_all = _read_npy(zf, "normal_eta")
            chol_all = _read_npy(zf, "normal_sigma_chol")
            eta = list(eta_all)
            sigma_chol = list(chol_all)
        trace = None
        if header.get("has_trace"):
            trace = {}
            for name in zf.namelist():
                if name.startswith("arrays/trace_"):
                    key = name[len("arrays/trace_") : -len(".npy")]
                    trace[key] = _read_npy(zf, f"trace_{key}")
        draws = PosteriorDraws(
            labels=[lab for lab in labels],
            mu=mu,
            beta=beta,
            m=m,
            tau=tau,
            sigma2=_read_npy(zf, "sigma2"),
            alpha=_read_npy(zf, "alpha"),
            meta=header["meta"],
            normal_eta=eta,
            normal_sigma_chol=sigma_chol,
            trace=trace,
        )
        norm_state = None
        ns = header.get("norm_state")
        if ns is not None:
            norm_state = NormState(
                np.asarray(ns["x_mean"]),
                np.asarray(ns["x_sd"]),
                float(ns["y_mean"]),
                float(ns["y_sd"]),
            )
        return draws, norm_state, header.get("config", {})
