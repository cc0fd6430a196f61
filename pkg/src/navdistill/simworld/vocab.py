"""Closed 128-token narration vocabulary."""

_WORDS = (
    "<scene>", "<humans>", "<traj>", "<reason>",
    "no", "none", "pedestrians", "pedestrian",
    "near", "mid", "far",
    "left", "center", "right",
    "crossing", "approaching", "leading", "standing", "turning",
    "walls", "narrow", "passage", "open", "area",
    "one", "two", "three", "four", "many",
    "will", "cross", "path", "come", "toward", "robot", "walk", "ahead",
    "stay", "still", "turn", "conflict", "clear",
    "continue", "straight", "veer", "stop", "slow", "fast",
    "yield", "to", "pass", "on", "of", "follow", "keep", "distance",
    "wait", "avoid", "and", "the", "side", "behind", "wall", "move",
    "proceed", "carefully", "gap", "space", "until", "clears",
)

VOCAB_SIZE = 128
VOCAB: tuple[str, ...] = _WORDS + tuple(f"<reserved_{i}>" for i in range(VOCAB_SIZE - len(_WORDS)))
TOKEN_ID = {tok: i for i, tok in enumerate(VOCAB)}

assert len(VOCAB) == VOCAB_SIZE and len(TOKEN_ID) == VOCAB_SIZE


def encode_tokens(tokens) -> list[int]:
    try:
        return [TOKEN_ID[t] for t in tokens]
    except KeyError as exc:
        from navdistill.errors import ContractError

        raise ContractError(f"token {exc.args[0]!r} is not in the vocabulary") from None
