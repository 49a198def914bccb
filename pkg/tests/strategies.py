"""Hypothesis strategies shared by the test modules."""

from __future__ import annotations

from hypothesis import strategies as st

from rmdkit.plan import HUMAN_PARTS, EdgeSpec, InteractionStep, MovementDynamic, Plan, Relation, RmdGraphSpec, TargetSpec

token = st.text(alphabet="abcdefghijklmnopqrstuvwxyz_", min_size=1, max_size=10)
free_text = st.text(max_size=30)  # any unicode, including quotes and newlines

targets = st.builds(TargetSpec, token, st.sampled_from(list(Relation)))


@st.composite
def graphs(draw, max_edges: int = 5) -> RmdGraphSpec:
    pairs = draw(
        st.lists(st.tuples(st.sampled_from(HUMAN_PARTS), token), min_size=1, max_size=max_edges, unique=True)
    )
    return RmdGraphSpec(tuple(EdgeSpec(h, o, draw(st.sampled_from(list(MovementDynamic)))) for h, o in pairs))


steps = st.builds(InteractionStep, free_text, targets, st.one_of(st.none(), targets), graphs())
plans = st.builds(Plan, st.lists(steps, min_size=1, max_size=5).map(tuple), free_text, token)
