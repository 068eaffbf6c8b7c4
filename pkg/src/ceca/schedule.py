"""Round schedule derived from the binary expansion of the agent count.

Exact consensus over n agents completes in tau = ceil(log2 n) rounds.
Round r is driven by a bit delta[r], read off the binary representation
of n - 1 most significant bit first, and by a window size nr[r] that
grows as nr[0] = 0, nr[r+1] = 2 * nr[r] + delta[r], ending at
nr[tau] = n - 1.  Everything else in this package (communication
matrices, consensus recursions, mixing matrices, the optimizer) is
parameterized by this schedule.
"""

from __future__ import annotations

from dataclasses import dataclass

__all__ = ["BinarySchedule", "build_schedule", "mod_index"]


def mod_index(i: int, n: int) -> int:
    """Reduce an integer to the 1-based agent range [1, n].

    Multiples of n map to n rather than 0, so ring arithmetic on agent
    labels wraps as expected: mod_index(0, 6) == 6, mod_index(-1, 6) == 5,
    mod_index(7, 6) == 1.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return (i - 1) % n + 1


@dataclass(frozen=True)
class BinarySchedule:
    """Immutable per-round plan for n agents; see the module docstring.

    delta has length tau; nr has length tau + 1.  Safe to share across
    threads.
    """

    n: int
    tau: int
    delta: tuple[int, ...]
    nr: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.n < 2:
            # n = 1 has no meaningful round plan; reject instead of tau = 0.
            raise ValueError(f"schedules require n >= 2, got n={self.n}")
        expected_tau = (self.n - 1).bit_length()
        if self.tau != expected_tau:
            raise ValueError(
                f"tau={self.tau} but ceil(log2({self.n})) = {expected_tau}"
            )
        if len(self.delta) != self.tau:
            raise ValueError(f"delta must have {self.tau} bits, got {len(self.delta)}")
        if len(self.nr) != self.tau + 1:
            raise ValueError(
                f"nr must have {self.tau + 1} entries, got {len(self.nr)}"
            )
        if any(bit not in (0, 1) for bit in self.delta):
            raise ValueError(f"delta must be a bit sequence, got {self.delta}")
        if self.delta[0] != 1:
            raise ValueError("the leading window bit must be 1")
        if self.nr[0] != 0:
            raise ValueError(f"nr[0] must be 0, got {self.nr[0]}")
        for r, bit in enumerate(self.delta):
            if self.nr[r + 1] != 2 * self.nr[r] + bit:
                raise ValueError(
                    f"nr[{r + 1}] must equal 2*nr[{r}] + delta[{r}]"
                )
        if self.nr[-1] != self.n - 1:
            raise ValueError(f"nr[{self.tau}] must equal n - 1 = {self.n - 1}")


def build_schedule(n: int) -> BinarySchedule:
    """Derive the round schedule for n agents.

    Requires n >= 2; the bit sequence is the binary representation of
    n - 1 with the most significant bit first.
    """
    if n < 2:
        raise ValueError(f"consensus schedules require n >= 2, got n={n}")
    bits = tuple(int(b) for b in format(n - 1, "b"))
    tau = len(bits)
    windows = [0]
    for bit in bits:
        windows.append(2 * windows[-1] + bit)
    return BinarySchedule(n=n, tau=tau, delta=bits, nr=tuple(windows))
