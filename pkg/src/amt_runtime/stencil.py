"""Distributed 1D three-point heat stencil with halo exchange over channels.

Each locality owns a contiguous chunk of cells.  Every step it ships its
edge values to the neighbors' inbox channels, spawns the interior update
immediately (no halo needed), and gates only the two boundary cells on the
incoming halo futures -- communication overlaps with computation.  The
final field is gathered back to locality 0.

Update rule per cell: u' = u + alpha * ((left - 2u) + right), with
alpha = 0.25 for unconditional stability.  Boundary modes: "zero" ghosts
(fixed-zero boundary, the default) or "reflect" ghosts (zero-flux; a
uniform field is then an exact fixed point).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .futures import when_all
from .gid import service_gid

BOUNDARY_ZERO = "zero"
BOUNDARY_REFLECT = "reflect"
_BOUNDARY_CODES = {BOUNDARY_ZERO: 0, BOUNDARY_REFLECT: 1}
_CODE_BOUNDARY = {v: k for k, v in _BOUNDARY_CODES.items()}

INIT_SPIKE = "spike"
INIT_UNIFORM = "uniform"
INIT_RAMP = "ramp"

_run_nonce = itertools.count(1)


@dataclass
class StencilParams:
    cells: int
    steps: int
    localities: int = 1
    alpha: float = 0.25
    boundary: str = BOUNDARY_ZERO
    init: str = INIT_SPIKE

    def validate(self) -> None:
        if self.cells <= 0 or self.steps < 0 or self.localities <= 0:
            raise InvalidArgumentError("cells and localities must be positive, steps non-negative")
        if self.cells % self.localities != 0:
            raise InvalidArgumentError(f"{self.cells} cells not divisible by {self.localities} localities")
        if self.boundary not in _BOUNDARY_CODES:
            raise InvalidArgumentError(f"unknown boundary mode {self.boundary!r}")
        if self.init not in (INIT_SPIKE, INIT_UNIFORM, INIT_RAMP):
            raise InvalidArgumentError(f"unknown initial condition {self.init!r}")


def initial_field(cells: int, init: str) -> np.ndarray:
    u = np.zeros(cells, dtype=np.float64)
    if init == INIT_SPIKE:
        u[cells // 2] = 1.0
    elif init == INIT_UNIFORM:
        u[:] = 1.0
    else:  # ramp
        u[:] = np.arange(cells, dtype=np.float64) / cells
    return u


def edge_value(center: float, left: float, right: float, alpha: float) -> float:
    return center + alpha * ((left - 2.0 * center) + right)


def interior_values(u: np.ndarray, alpha: float) -> np.ndarray:
    # Same association order as edge_value: (left - 2c) + right.
    return u[1:-1] + alpha * ((u[:-2] - 2.0 * u[1:-1]) + u[2:])


def _ghost(u: np.ndarray, side: str, boundary: str) -> float:
    if boundary == BOUNDARY_REFLECT:
        return float(u[0] if side == "left" else u[-1])
    return 0.0


def _names(nonce: int, k: int) -> tuple[str, str]:
    return f"/stencil/{nonce}/{k}/from-left", f"/stencil/{nonce}/{k}/from-right"


def _gather_name(nonce: int) -> str:
    return f"/stencil/{nonce}/gather"


def setup_partition(rt, nonce: int, n_loc: int) -> None:
    """Register this locality's inbox channels (and the gather channel on 0)."""
    k = rt.locality_id
    from_left, from_right = _names(nonce, k)
    if k > 0:
        rt.register_channel(from_left)
    if k < n_loc - 1:
        rt.register_channel(from_right)
    if k == 0:
        rt.register_channel(_gather_name(nonce))


def run_partition(rt, nonce: int, params: StencilParams) -> None:
    """Advance this locality's chunk through all steps, then send it to the
    gather channel.  Runs inside a task (halo waits suspend it)."""
    k = rt.locality_id
    n = params.localities
    m = params.cells // n
    alpha = params.alpha
    full = initial_field(params.cells, params.init)
    u = full[k * m : (k + 1) * m].copy()

    in_left = in_right = None
    out_left = out_right = None
    if k > 0:
        in_left = rt.resolve_name(_names(nonce, k)[0])
        out_left = rt.resolve_name(_names(nonce, k - 1)[1])
    if k < n - 1:
        in_right = rt.resolve_name(_names(nonce, k)[1])
        out_right = rt.resolve_name(_names(nonce, k + 1)[0])

    for _ in range(params.steps):
        if out_left is not None:
            rt.channel_send(out_left, float(u[0]))
        if out_right is not None:
            rt.channel_send(out_right, float(u[-1]))
        left_f = rt.channel_recv(in_left) if in_left is not None else rt.make_ready_future(_ghost(u, "left", params.boundary))
        right_f = rt.channel_recv(in_right) if in_right is not None else rt.make_ready_future(_ghost(u, "right", params.boundary))

        if m == 1:
            cell_f = rt.dataflow(lambda lg, rg, c=float(u[0]): edge_value(c, lg, rg, alpha), [left_f, right_f])
            u = np.array([cell_f.get()], dtype=np.float64)
            continue

        interior_f = rt.spawn(lambda u=u: interior_values(u, alpha))
        left_cell_f = left_f.then(lambda lg, c=float(u[0]), r=float(u[1]): edge_value(c, lg, r, alpha))
        right_cell_f = right_f.then(lambda rg, c=float(u[-1]), l=float(u[-2]): edge_value(c, l, rg, alpha))

        new = np.empty(m, dtype=np.float64)
        new[1:-1] = interior_f.get()
        new[0] = left_cell_f.get()
        new[-1] = right_cell_f.get()
        u = new

    rt.channel_send(_gather_name(nonce) if k == 0 else rt.resolve_name(_gather_name(nonce)),
                    [k, u.astype("<f8").tobytes()]).get()


ACTION_SETUP = "stencil/setup"
ACTION_RUN = "stencil/run"

_PARAM_SIG = ("i64", "i64", "i64", "i64", "f64", "i64", "bytes")


def _params_to_args(nonce: int, p: StencilParams) -> list:
    return [nonce, p.cells, p.steps, p.localities, p.alpha, _BOUNDARY_CODES[p.boundary], p.init.encode()]


def _params_from_args(args) -> tuple[int, StencilParams]:
    nonce, cells, steps, localities, alpha, bcode, init = args
    return nonce, StencilParams(
        cells=cells, steps=steps, localities=localities, alpha=alpha,
        boundary=_CODE_BOUNDARY[bcode], init=init.decode(),
    )


def install(rt) -> None:
    """Register the stencil control actions on a runtime (before boot)."""

    def h_setup(_handle, *args):
        nonce, params = _params_from_args(args)
        setup_partition(rt, nonce, params.localities)
        return None

    def h_run(_handle, *args):
        nonce, params = _params_from_args(args)
        run_partition(rt, nonce, params)
        return None

    rt.register_action(ACTION_SETUP, _PARAM_SIG, h_setup)
    rt.register_action(ACTION_RUN, _PARAM_SIG, h_run)


def distributed_stencil(rt, params: StencilParams) -> np.ndarray:
    """Drive a stencil run across all localities from locality 0 and return
    the gathered final field."""
    params.validate()
    if rt.locality_id != 0:
        raise InvalidArgumentError("the stencil driver runs on locality 0")
    nonce = next(_run_nonce)
    args = _params_to_args(nonce, params)
    n = params.localities

    when_all([rt.apply(service_gid(k), ACTION_SETUP, args) for k in range(n)], rt).get()
    run_futs = [rt.apply(service_gid(k), ACTION_RUN, args) for k in range(n)]

    gather = rt.resolve_name(_gather_name(nonce))
    chunks: dict[int, np.ndarray] = {}
    for _ in range(n):
        k, raw = rt.channel_recv(gather).get()
        chunks[k] = np.frombuffer(raw, dtype="<f8")
    when_all(run_futs, rt).get()

    m = params.cells // n
    out = np.empty(params.cells, dtype=np.float64)
    for k in range(n):
        out[k * m : (k + 1) * m] = chunks[k]
    return out
