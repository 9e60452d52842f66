"""Target log-densities: factorized Gaussian, Rosenbrock banana, external blackbox.

Every target is treated as possibly unnormalized; the built-in ones happen
to be normalized. :meth:`Target.evaluate` is the only entry point the
samplers use, and it counts every evaluated point in ``n_evaluations``.

Blackbox protocol (UTF-8 JSON lines over the child's stdin/stdout)::

    -> {"hello": {"dim": d}}        once, right after start
    <- {"hello": {"dim": d}}        the child echoes its dimension
    -> {"x": [x_1, ..., x_d]}       one request per particle
    <- {"logpi": value}             one response per request

``value`` may be ``null`` or the string ``"-inf"`` for a zero density.
"""
import json
import logging
import math
import queue
import subprocess
import threading
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence

import numpy as np
from scipy.stats import norm

from ..exceptions import ContractViolation, TargetEvaluationError
from ..models.config import TargetSpec

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)


def gaussian_iid_log_density(m: float, v: float, x) -> float:
    """Σ_j log φ(x_j | m, v); ``v`` is a variance"""
    if not v > 0:
        raise ContractViolation(f"variance must be > 0, got {v}")
    return float(np.sum(norm.logpdf(np.asarray(x, dtype=float), loc=m, scale=math.sqrt(v))))


def rosenbrock_transform(x, sigma2: float, b: float) -> np.ndarray:
    """Ψ(x) = (x_1, x_2 + b(x_1² − σ²), x_3, …, x_d), row-wise on a batch.

    Ψ is lower triangular with a unit diagonal, so its Jacobian determinant
    is 1 and φ(Ψ(x) | 0, Σ) is a normalized density in x.
    """
    points = np.array(x, dtype=float, copy=True)
    squeeze = points.ndim == 1
    points = np.atleast_2d(points)
    if points.shape[1] < 2:
        raise ContractViolation("the Rosenbrock target needs dimension >= 2")
    points[:, 1] = points[:, 1] + b * (points[:, 0] ** 2 - sigma2)
    return points[0] if squeeze else points


def _rosenbrock_batch(sigma2: float, b: float, points: np.ndarray) -> np.ndarray:
    y = rosenbrock_transform(points, sigma2, b)
    d = y.shape[1]
    return (-0.5 * (d * LOG_2PI + math.log(sigma2))
            - 0.5 * y[:, 0] ** 2 / sigma2
            - 0.5 * np.sum(y[:, 1:] ** 2, axis=1))


def rosenbrock_log_density(sigma2: float, b: float, x) -> float:
    """log φ(Ψ(x) | 0, diag(σ², 1, …, 1))"""
    if not sigma2 > 0:
        raise ContractViolation(f"sigma2 must be > 0, got {sigma2}")
    vector = np.asarray(x, dtype=float)
    if vector.ndim != 1:
        raise ContractViolation("expected a single d-vector")
    return float(_rosenbrock_batch(sigma2, b, vector[np.newaxis, :])[0])


class Target:
    """Base class: subclasses implement ``_log_density`` on an (N, d) batch"""

    def __init__(self, dim: int):
        self.dim = dim
        self.n_evaluations = 0

    def evaluate(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[1] != self.dim:
            raise ContractViolation(f"expected points of shape (N, {self.dim}), got {points.shape}")
        values = self._log_density(points)
        self.n_evaluations += points.shape[0]
        return values

    def _log_density(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def true_mean(self) -> Optional[np.ndarray]:
        return None

    def true_variances(self) -> Optional[np.ndarray]:
        return None

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class GaussianIIDTarget(Target):
    """𝒩(m, v)^⊗d with v a variance"""

    def __init__(self, mean: float, variance: float, dim: int):
        if not variance > 0:
            raise ContractViolation(f"variance must be > 0, got {variance}")
        super().__init__(dim)
        self.mean = float(mean)
        self.variance = float(variance)

    def _log_density(self, points):
        return np.sum(norm.logpdf(points, loc=self.mean, scale=math.sqrt(self.variance)), axis=1)

    def true_mean(self):
        return np.full(self.dim, self.mean)

    def true_variances(self):
        return np.full(self.dim, self.variance)


class RosenbrockTarget(Target):
    """Banana-shaped target φ(Ψ(x) | 0, diag(σ², 1, …, 1))"""

    def __init__(self, sigma2: float = 100.0, b: float = 0.03, dim: int = 2):
        if not sigma2 > 0:
            raise ContractViolation(f"sigma2 must be > 0, got {sigma2}")
        if dim < 2:
            raise ContractViolation("the Rosenbrock target needs dimension >= 2")
        super().__init__(dim)
        self.sigma2 = float(sigma2)
        self.b = float(b)

    def _log_density(self, points):
        return _rosenbrock_batch(self.sigma2, self.b, points)

    def true_mean(self):
        # E[x_2] = E[y_2] - b (E[x_1^2] - σ²) = 0
        return np.zeros(self.dim)

    def true_variances(self):
        variances = np.ones(self.dim)
        variances[0] = self.sigma2
        variances[1] = 1.0 + 2.0 * self.b ** 2 * self.sigma2 ** 2
        return variances


class BlackboxClient:
    """One child process speaking the JSON-lines protocol"""

    def __init__(self, command: Sequence[str], dim: int, timeout: float = 30.0):
        self.command = list(command)
        self.dim = dim
        self.timeout = timeout
        self.round_trips = 0
        self._lines: 'queue.Queue[Optional[str]]' = queue.Queue()
        try:
            self._process = subprocess.Popen(
                self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                text=True, encoding='utf-8', bufsize=1,
            )
        except OSError as exc:
            raise TargetEvaluationError(f"cannot start blackbox target {self.command}: {exc}") from exc
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()
        self._handshake()

    def _pump(self):
        for line in self._process.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def _send(self, payload) -> None:
        try:
            self._process.stdin.write(json.dumps(payload) + '\n')
            self._process.stdin.flush()
        except (BrokenPipeError, OSError, ValueError) as exc:
            raise TargetEvaluationError(f"blackbox target exited (code {self._process.poll()})") from exc

    def _receive(self) -> dict:
        try:
            line = self._lines.get(timeout=self.timeout)
        except queue.Empty as exc:
            raise TargetEvaluationError(f"blackbox target timed out after {self.timeout}s") from exc
        if line is None:
            raise TargetEvaluationError(f"blackbox target exited (code {self._process.poll()})")
        try:
            message = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TargetEvaluationError(f"malformed blackbox response {line.strip()!r}") from exc
        if not isinstance(message, dict):
            raise TargetEvaluationError(f"malformed blackbox response {line.strip()!r}")
        return message

    def _handshake(self) -> None:
        self._send({'hello': {'dim': self.dim}})
        reply = self._receive()
        try:
            reported = int(reply['hello']['dim'])
        except (KeyError, TypeError, ValueError) as exc:
            raise TargetEvaluationError(f"blackbox handshake failed: {reply!r}") from exc
        if reported != self.dim:
            raise TargetEvaluationError(f"blackbox target reports dim {reported}, expected {self.dim}")

    def log_density(self, x) -> float:
        self._send({'x': [float(v) for v in x]})
        reply = self._receive()
        self.round_trips += 1
        if 'logpi' not in reply:
            raise TargetEvaluationError(f"malformed blackbox response {reply!r}")
        value = reply['logpi']
        if value is None or value == '-inf':
            return -math.inf
        try:
            value = float(value)
        except (TypeError, ValueError) as exc:
            raise TargetEvaluationError(f"non-numeric logpi {value!r}") from exc
        if math.isnan(value) or value == math.inf:
            raise TargetEvaluationError(f"invalid logpi {value!r}")
        return value

    def close(self) -> None:
        if self._process.poll() is None:
            try:
                self._process.stdin.close()
            except OSError:
                pass
            try:
                self._process.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._process.kill()
                self._process.wait()


def blackbox_log_density(client: BlackboxClient, x) -> float:
    return client.log_density(x)


class BlackboxTarget(Target):
    """External target over one or several child processes.

    With ``workers`` > 1 a batch is cut into contiguous chunks
    (``numpy.array_split``) and chunk i always goes to child i.
    """

    def __init__(self, command: Sequence[str], dim: int, timeout: float = 30.0, workers: int = 1):
        super().__init__(dim)
        self.clients = []
        try:
            for _ in range(max(1, workers)):
                self.clients.append(BlackboxClient(command, dim, timeout))
        except TargetEvaluationError:
            self.close()
            raise

    @property
    def round_trips(self) -> int:
        return sum(client.round_trips for client in self.clients)

    def _evaluate_chunk(self, client: BlackboxClient, points: np.ndarray, offset: int) -> np.ndarray:
        out = np.empty(points.shape[0])
        for i, x in enumerate(points):
            try:
                out[i] = client.log_density(x)
            except TargetEvaluationError as exc:
                raise TargetEvaluationError(
                    f"blackbox evaluation failed at particle {offset + i}: {exc}",
                    particle_index=offset + i,
                ) from exc
        return out

    def _log_density(self, points):
        if len(self.clients) == 1:
            return self._evaluate_chunk(self.clients[0], points, 0)
        chunks = np.array_split(np.arange(points.shape[0]), len(self.clients))
        with ThreadPoolExecutor(max_workers=len(self.clients)) as pool:
            futures = [
                pool.submit(self._evaluate_chunk, client, points[idx], int(idx[0]) if idx.size else 0)
                for client, idx in zip(self.clients, chunks)
            ]
            return np.concatenate([future.result() for future in futures])

    def close(self) -> None:
        for client in self.clients:
            client.close()


def build_target(spec: TargetSpec, timeout: float = 30.0, workers: int = 1) -> Target:
    spec.validate()
    if spec.kind == 'gaussian_iid':
        return GaussianIIDTarget(spec.mean, spec.variance, spec.dim)
    if spec.kind == 'rosenbrock':
        return RosenbrockTarget(spec.sigma2, spec.b, spec.dim)
    return BlackboxTarget(spec.command, spec.dim, timeout=timeout, workers=workers)
