"""Named hyperparameter presets for the trainable model families.

For convolutional kinds ``num_layers`` counts convolution layers (the two
dense layers after them are fixed); for recurrent kinds it is the depth of
the GRU stack. ``lstm-1`` is kept as a named alias that runs on the GRU cell
so the preset table stays complete without a second recurrent cell.
"""

from __future__ import annotations

from .core import ModelKind, TrainPreset


def _p(kind: ModelKind, layers: int, epochs: int, hidden: int, lr: float, batch: int) -> TrainPreset:
    return TrainPreset(
        model_kind=kind,
        num_layers=layers,
        epochs=epochs,
        hidden_size=hidden,
        learning_rate=lr,
        batch_size=batch,
    )


PRESETS: dict[str, TrainPreset] = {
    "convgru-1": _p(ModelKind.CONVGRU, 2, 200, 200, 1e-3, 25),
    "convgru-2": _p(ModelKind.CONVGRU, 2, 200, 10, 1e-3, 25),
    "convgru-3": _p(ModelKind.CONVGRU, 1, 200, 5, 1e-3, 25),
    "convgru-4": _p(ModelKind.CONVGRU, 2, 200, 200, 1e-3, 200),
    "convgru-5": _p(ModelKind.CONVGRU, 2, 200, 200, 1e-4, 1000),
    "convgru-6": _p(ModelKind.CONVGRU, 2, 200, 200, 1e-4, 1000),
    "convgru-nl-1": _p(ModelKind.CONVGRU_NOLINEAR, 2, 500, 200, 1e-4, 4000),
    "convgru-nl-2": _p(ModelKind.CONVGRU_NOLINEAR, 2, 200, 200, 1e-4, 500),
    "convgru-nl-3": _p(ModelKind.CONVGRU_NOLINEAR, 2, 500, 200, 1e-4, 4000),
    "gru-1": _p(ModelKind.GRU, 2, 40, 200, 3e-4, 100),
    "lstm-1": _p(ModelKind.GRU, 2, 40, 200, 3e-4, 100),  # alias onto the GRU cell
    "conv1d-1": _p(ModelKind.CONV1D, 1, 100, 64, 1e-5, 50),
    "conv1d-2": _p(ModelKind.CONV1D, 1, 100, 64, 1e-4, 50),
    "conv1d-3": _p(ModelKind.CONV1D, 1, 148, 64, 1e-5, 50),
    "conv1d-dilated-1": _p(ModelKind.CONV1D_DILATED, 3, 100, 64, 1e-5, 50),
    "conv1d-dilated-2": _p(ModelKind.CONV1D_DILATED, 3, 100, 64, 1e-5, 128),
    "conv1d-maxpool-1": _p(ModelKind.CONV1D_MAXPOOL, 3, 100, 64, 1e-5, 128),
    # No published feedforward row exists; this is a local default so the
    # feedforward family is runnable alongside the others.
    "feedforward-1": _p(ModelKind.FEEDFORWARD, 2, 100, 64, 1e-3, 50),
}

# First preset listed for each kind, used when only a model kind is named.
DEFAULT_PRESET_BY_KIND: dict[ModelKind, str] = {}
for _name, _preset in PRESETS.items():
    DEFAULT_PRESET_BY_KIND.setdefault(_preset.model_kind, _name)
del _name, _preset


def get_preset(name: str) -> TrainPreset:
    try:
        return PRESETS[name]
    except KeyError:
        known = ", ".join(sorted(PRESETS))
        raise ValueError(f"unknown preset {name!r}; known presets: {known}") from None


def preset_for_kind(kind: ModelKind) -> tuple[str, TrainPreset]:
    name = DEFAULT_PRESET_BY_KIND[kind]
    return name, PRESETS[name]
