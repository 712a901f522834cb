"""Timestep rule of the input-supervised branch."""

from typing import Optional, Union

from src.core.config import FoldPolicy
from src.core.exceptions import FoldPolicyError, TimestepRangeError


def fold_timestep(t: int, t_s: int, policy: Union[FoldPolicy, str], T: Optional[int] = None) -> Optional[int]:
    """
    Effective timestep of the input branch.

    ``folded``: t mod t_s, with 0 mapped to t_s since timesteps are 1-based.
    ``gated``: t when t <= t_s, otherwise None (branch skipped).

    Raises:
        FoldPolicyError: If the policy is unknown
        TimestepRangeError: If t < 1, or t > T when T is given
    """
    try:
        policy = FoldPolicy(policy)
    except ValueError as e:
        raise FoldPolicyError(str(policy)) from e
    if t < 1 or (T is not None and t > T):
        raise TimestepRangeError(t, T if T is not None else t_s)
    if policy == FoldPolicy.FOLDED:
        folded = t % t_s
        return t_s if folded == 0 else folded
    return t if t <= t_s else None
