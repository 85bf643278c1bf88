"""Interaction Markov process specifications and named presets.

A process is a finite state set plus two rate tables: spontaneous rates
q_{s→s'} and pairwise interaction rates q_{s̃;s→s'} (a neighbor in state s̃
pushes an s vertex toward s').  Diagonals are never stored; they are derived
as negative row sums wherever a full generator row is needed.  The 1/(Nρ)
interaction normalization is applied at simulation/solve time, not here.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from ._util import ConfigError, atomic_write_text


@dataclass(frozen=True)
class ClosedFormTag:
    """Routes a preset to its analytic oracle; plumbing, not part of the model.

    kind: 'catalyst' or 'degree'; labels: the preset's state labels in
    oracle order (a, b[, c]).
    """

    kind: str
    labels: tuple

    def __post_init__(self):
        if self.kind == "catalyst" and len(self.labels) != 3:
            raise ConfigError("catalyst closed form needs exactly 3 states")
        if self.kind == "degree" and len(self.labels) != 2:
            raise ConfigError("degree closed form needs exactly 2 states")
        if self.kind not in ("catalyst", "degree"):
            raise ConfigError(f"unknown closed-form kind {self.kind!r}")


@dataclass(eq=False)
class ProcessSpec:
    """State labels plus off-diagonal spontaneous and interaction rate tables.

    spontaneous[s, s'] = q_{s→s'}; interaction[s̃, s, s'] = q_{s̃;s→s'}.
    Stored diagonals (s == s') must be zero.
    """

    states: tuple
    spontaneous: np.ndarray
    interaction: np.ndarray
    tag: ClosedFormTag = field(default=None, repr=False)

    def __post_init__(self):
        self.states = tuple(str(s) for s in self.states)
        m = len(self.states)
        if m < 1:
            raise ConfigError("at least one state required")
        if len(set(self.states)) != m:
            raise ConfigError(f"duplicate state labels in {self.states}")
        self.spontaneous = np.asarray(self.spontaneous, dtype=np.float64)
        self.interaction = np.asarray(self.interaction, dtype=np.float64)
        if self.spontaneous.shape != (m, m):
            raise ConfigError(f"spontaneous table must be {m}x{m}")
        if self.interaction.shape != (m, m, m):
            raise ConfigError(f"interaction table must be {m}x{m}x{m}")
        for table, name in ((self.spontaneous, "spontaneous"),
                            (self.interaction, "interaction")):
            if not np.all(np.isfinite(table)) or np.any(table < 0):
                raise ConfigError(f"{name} rates must be finite and nonnegative")
        if np.any(np.diagonal(self.spontaneous) != 0):
            raise ConfigError("spontaneous diagonal entries must not be stored")
        if np.any(np.diagonal(self.interaction, axis1=1, axis2=2) != 0):
            raise ConfigError("interaction diagonal entries must not be stored")

    @property
    def n_states(self):
        return len(self.states)

    def state_index(self, label):
        try:
            return self.states.index(str(label))
        except ValueError:
            raise ConfigError(f"unknown state {label!r}; states are {self.states}")

    def spontaneous_full(self):
        """Spontaneous generator with derived diagonal (rows sum to 0)."""
        q = self.spontaneous.copy()
        np.fill_diagonal(q, -q.sum(axis=1))
        return q

    def interaction_full(self):
        """Per-neighbor-state generators with derived diagonals."""
        q = self.interaction.copy()
        for a in range(self.n_states):
            np.fill_diagonal(q[a], -q[a].sum(axis=1))
        return q

    def spontaneous_out(self):
        """Total spontaneous outflow rate per state."""
        return self.spontaneous.sum(axis=1)

    def interaction_out(self):
        """Total interaction outflow per (neighbor state, own state)."""
        return self.interaction.sum(axis=2)

    def __eq__(self, other):
        # the tag is oracle routing, not part of the process
        if not isinstance(other, ProcessSpec):
            return NotImplemented
        return (
            self.states == other.states
            and np.array_equal(self.spontaneous, other.spontaneous)
            and np.array_equal(self.interaction, other.interaction)
        )

    def to_json_dict(self):
        spont = [
            {"from": self.states[s], "to": self.states[t], "rate": float(r)}
            for (s, t), r in np.ndenumerate(self.spontaneous)
            if r != 0.0
        ]
        inter = [
            {
                "neighbor": self.states[a],
                "from": self.states[s],
                "to": self.states[t],
                "rate": float(r),
            }
            for (a, s, t), r in np.ndenumerate(self.interaction)
            if r != 0.0
        ]
        return {"states": list(self.states), "spontaneous": spont, "interaction": inter}

    @classmethod
    def from_json_dict(cls, obj, tag=None):
        try:
            states = tuple(obj["states"])
            spont_entries = obj["spontaneous"]
            inter_entries = obj["interaction"]
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"invalid process object: {exc}") from exc
        m = len(states)
        spec = cls(states, np.zeros((m, m)), np.zeros((m, m, m)), tag=tag)
        for e in spont_entries:
            s, t = spec.state_index(e["from"]), spec.state_index(e["to"])
            if s == t:
                raise ConfigError(f"spontaneous rate {e} has from == to")
            r = float(e["rate"])
            if r < 0:
                raise ConfigError(f"negative rate in {e}")
            spec.spontaneous[s, t] = r
        for e in inter_entries:
            a = spec.state_index(e["neighbor"])
            s, t = spec.state_index(e["from"]), spec.state_index(e["to"])
            if s == t:
                raise ConfigError(f"interaction rate {e} has from == to")
            r = float(e["rate"])
            if r < 0:
                raise ConfigError(f"negative rate in {e}")
            spec.interaction[a, s, t] = r
        return spec

    def save(self, path):
        atomic_write_text(path, json.dumps(self.to_json_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))


def preset_sir(beta, gamma):
    """SIR: an infected neighbor infects at rate beta; recovery at rate gamma.

    gamma=0 gives the SI process.
    """
    if beta < 0 or gamma < 0:
        raise ConfigError(f"rates must be nonnegative, got beta={beta} gamma={gamma}")
    states = ("S", "I", "R")
    spont = np.zeros((3, 3))
    spont[1, 2] = gamma  # I -> R
    inter = np.zeros((3, 3, 3))
    inter[1, 0, 1] = beta  # neighbor I pushes S -> I
    return ProcessSpec(states, spont, inter)


def preset_catalyst():
    """Three states a, b, c; a catalyst neighbor (c) converts a to b at rate 1.

    State c never moves, so catalyst counts are conserved and the dynamics
    integrate in closed form.
    """
    states = ("a", "b", "c")
    inter = np.zeros((3, 3, 3))
    inter[2, 0, 1] = 1.0  # neighbor c pushes a -> b
    return ProcessSpec(
        states, np.zeros((3, 3)), inter, tag=ClosedFormTag("catalyst", states)
    )


def preset_degree():
    """Two states; every neighbor pushes a to b at rate 1.

    A vertex in state a with degree δ flips at total rate δ/(Nρ); state b is
    absorbing, so each vertex's law is a single exponential clock.
    """
    states = ("a", "b")
    inter = np.zeros((2, 2, 2))
    inter[0, 0, 1] = 1.0  # neighbor a pushes a -> b
    inter[1, 0, 1] = 1.0  # neighbor b pushes a -> b
    return ProcessSpec(
        states, np.zeros((2, 2)), inter, tag=ClosedFormTag("degree", states)
    )
