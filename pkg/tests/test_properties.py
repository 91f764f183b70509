"""Randomized invariants; the bodies live in ``_props`` so the acceptance suite can rerun them."""
from _props import prop_catalyst_conservation as test_catalyst_conservation  # noqa: F401
from _props import prop_crossing_refinement as test_crossing_refinement  # noqa: F401
from _props import prop_forward_invariance as test_forward_invariance  # noqa: F401
from _props import prop_gating_identity as test_gating_identity  # noqa: F401
from _props import prop_nonnegative_trajectories as test_nonnegative_trajectories  # noqa: F401
from _props import prop_round_trip as test_round_trip  # noqa: F401
