"""
Model parameter registry

Named float64 arrays for source embeddings, the bidirectional encoder and
one or more attentional decoders. A decoder is identified by its prefix
("main" for single-decoder models, "word"/"tag" for multitask models).

Shape table (E = total source embedding width, H = hidden, Ey = target
embedding, A = attention, O = deep output, V = decoder vocabulary):

    src.emb.<feature>     (V_feature, width)
    enc.{fwd,bwd}.W       (E, 3H)      input weights, gates [r, z, n]
    enc.{fwd,bwd}.U       (H, 3H)      recurrent weights
    enc.{fwd,bwd}.b       (3H,)
    dec.<p>.emb           (V, Ey)
    dec.<p>.init.W / b    (2H, H) / (H,)
    dec.<p>.gru1.W/U/b    (Ey, 3H) / (H, 3H) / (3H,)
    dec.<p>.att.W         (H, A)       decoder-state projection
    dec.<p>.att.U         (2H, A)      encoder-state projection
    dec.<p>.att.b / v     (A,) / (A, 1)
    dec.<p>.gru2.W/U/b    (2H, 3H) / (H, 3H) / (3H,)
    dec.<p>.out.Wy/Ws/Wc  (Ey, O) / (H, O) / (2H, O)
    dec.<p>.out.b         (O,)
    dec.<p>.out.Wo        (O, V)
"""

import logging
from typing import Dict, Iterator, List, Mapping, Optional, Tuple

import numpy as np

from backend.app.core.exceptions import NonFiniteError
from backend.app.modules.model.schemas import EmbeddingSpec, ModelConfig
from backend.app.modules.tensor import Tape, Tensor

logger = logging.getLogger(__name__)

Shape = Tuple[int, ...]


def shape_table(config: ModelConfig, spec: EmbeddingSpec, decoders: Mapping[str, int]) -> Dict[str, Shape]:
    """
    Shapes of every parameter array.

    Args:
        config: Model sizes
        spec: Source embedding layout
        decoders: Target vocabulary size per decoder prefix

    Returns:
        Parameter name -> shape, in a fixed order
    """
    E, H = spec.total_width, config.hidden_size
    Ey, A, O = config.target_embedding_size, config.attention_size, config.output_size

    shapes: Dict[str, Shape] = {}
    for feature in spec.features:
        shapes[f"src.emb.{feature.name}"] = (feature.vocab_size, feature.width)
    for direction in ("fwd", "bwd"):
        shapes[f"enc.{direction}.W"] = (E, 3 * H)
        shapes[f"enc.{direction}.U"] = (H, 3 * H)
        shapes[f"enc.{direction}.b"] = (3 * H,)
    for prefix, vocab_size in decoders.items():
        p = f"dec.{prefix}"
        shapes.update({
            f"{p}.emb": (vocab_size, Ey),
            f"{p}.init.W": (2 * H, H),
            f"{p}.init.b": (H,),
            f"{p}.gru1.W": (Ey, 3 * H),
            f"{p}.gru1.U": (H, 3 * H),
            f"{p}.gru1.b": (3 * H,),
            f"{p}.att.W": (H, A),
            f"{p}.att.U": (2 * H, A),
            f"{p}.att.b": (A,),
            f"{p}.att.v": (A, 1),
            f"{p}.gru2.W": (2 * H, 3 * H),
            f"{p}.gru2.U": (H, 3 * H),
            f"{p}.gru2.b": (3 * H,),
            f"{p}.out.Wy": (Ey, O),
            f"{p}.out.Ws": (H, O),
            f"{p}.out.Wc": (2 * H, O),
            f"{p}.out.b": (O,),
            f"{p}.out.Wo": (O, vocab_size),
        })
    return shapes


def _is_bias(name: str) -> bool:
    return name.endswith(".b")


class ModelParameters:
    """
    Named parameter arrays plus the layout they were built for.

    Arrays are replaced, never mutated in place, by the optimizer; a decode
    may keep reading a previous generation safely.
    """

    def __init__(
        self,
        config: ModelConfig,
        spec: EmbeddingSpec,
        decoders: Mapping[str, int],
        arrays: Mapping[str, np.ndarray]
    ):
        self.config = config
        self.spec = spec
        self.decoders: Dict[str, int] = dict(decoders)
        expected = shape_table(config, spec, self.decoders)
        if set(arrays) != set(expected):
            missing = sorted(set(expected) - set(arrays))
            extra = sorted(set(arrays) - set(expected))
            raise KeyError(f"parameter set mismatch: missing {missing}, unexpected {extra}")
        for name, shape in expected.items():
            if tuple(arrays[name].shape) != shape:
                raise ValueError(f"{name}: shape {arrays[name].shape}, expected {shape}")
        self.arrays: Dict[str, np.ndarray] = {
            name: np.asarray(arrays[name], dtype=np.float64) for name in expected
        }

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self.arrays)

    def __len__(self) -> int:
        return len(self.arrays)

    def names(self) -> List[str]:
        return list(self.arrays)

    def on_tape(self, tape: Tape, names: Optional[List[str]] = None) -> Dict[str, Tensor]:
        """Register (a subset of) the parameters as leaves of a tape"""
        return {name: tape.parameter(name, self.arrays[name]) for name in (names or self.arrays)}

    def replace(self, arrays: Mapping[str, np.ndarray]) -> "ModelParameters":
        """New parameter set with some arrays swapped out"""
        merged = dict(self.arrays)
        merged.update(arrays)
        return ModelParameters(self.config, self.spec, self.decoders, merged)

    def copy(self) -> "ModelParameters":
        return ModelParameters(
            self.config, self.spec, self.decoders, {n: a.copy() for n, a in self.arrays.items()}
        )

    def check_finite(self) -> None:
        for name, array in self.arrays.items():
            if not np.isfinite(array).all():
                raise NonFiniteError(f"parameter '{name}' has non-finite values", details={"name": name})


def init_parameters(
    config: ModelConfig,
    spec: EmbeddingSpec,
    decoders: Mapping[str, int],
    seed: int
) -> ModelParameters:
    """
    Uniform [-init_scale, init_scale] weights and zero biases.

    Arrays are drawn in shape-table order from one seeded generator.
    """
    rng = np.random.default_rng(seed)
    arrays: Dict[str, np.ndarray] = {}
    for name, shape in shape_table(config, spec, decoders).items():
        if _is_bias(name):
            arrays[name] = np.zeros(shape)
        else:
            arrays[name] = rng.uniform(-config.init_scale, config.init_scale, size=shape)
    params = ModelParameters(config, spec, decoders, arrays)
    logger.info(
        f"✓ Initialized {num_parameters(params):,} parameters "
        f"(decoders: {', '.join(f'{p}[{v}]' for p, v in params.decoders.items())})"
    )
    return params


def decoder_names(params: ModelParameters, prefix: str) -> List[str]:
    """All parameter names owned by one decoder"""
    return [n for n in params.arrays if n.startswith(f"dec.{prefix}.")]


def encoder_names(params: ModelParameters) -> List[str]:
    """Source embeddings and both encoder directions (shared across decoders)"""
    return [n for n in params.arrays if n.startswith(("src.", "enc."))]


def parameter_groups(params: ModelParameters) -> Dict[str, List[str]]:
    """
    Parameter names grouped by component.

    Groups: "embeddings" (source and every decoder's target table),
    "encoder", and per decoder "<p>.decoder" (init, GRU1, GRU2),
    "<p>.attention" and "<p>.output".
    """
    groups: Dict[str, List[str]] = {"embeddings": [], "encoder": []}
    for prefix in params.decoders:
        for part in ("decoder", "attention", "output"):
            groups[f"{prefix}.{part}"] = []

    for name in params.arrays:
        if name.startswith("src.emb.") or (name.startswith("dec.") and name.endswith(".emb")):
            groups["embeddings"].append(name)
        elif name.startswith("enc."):
            groups["encoder"].append(name)
        else:
            _, prefix, component = name.split(".", 3)[:3]
            if component == "att":
                groups[f"{prefix}.attention"].append(name)
            elif component == "out":
                groups[f"{prefix}.output"].append(name)
            else:
                groups[f"{prefix}.decoder"].append(name)
    return groups


def num_parameters(params: ModelParameters) -> int:
    return int(sum(a.size for a in params.arrays.values()))
