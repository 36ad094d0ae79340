import enum
import json
from typing import Any

import numpy as np
from pydantic import BaseModel, Extra, Field, root_validator

# FFT bins per band of the standard 22-channel allocation, apical to basal
DEFAULT_BAND_WIDTHS: tuple[int, ...] = (1,) * 9 + (2,) * 4 + (3,) * 2 + (4,) * 2 + (5,) * 2 + (6, 7, 8)


class ConfigModel(BaseModel):
    """Base for every configuration section: immutable, unknown keys rejected"""

    class Config:
        extra = Extra.forbid
        allow_mutation = False

    def plain_dict(self) -> dict[str, Any]:
        """JSON-compatible representation (enums as values, tuples as lists)"""
        result: dict[str, Any] = json.loads(self.json())
        return result


class WindowKind(str, enum.Enum):
    """supported analysis tapers"""

    HANN = "hann"
    RECTANGULAR = "rectangular"


class Activation(str, enum.Enum):
    """supported TCN layer activations"""

    RELU = "relu"
    TANH = "tanh"
    IDENTITY = "identity"


def default_band_edges(bin_spacing_hz: float, widths: tuple[int, ...] = DEFAULT_BAND_WIDTHS) -> tuple[float, ...]:
    """band edges on half-bin boundaries starting right below the third FFT bin"""
    edges = [1.5 * bin_spacing_hz]
    for width in widths:
        edges.append(edges[-1] + width * bin_spacing_hz)
    return tuple(edges)


class AceConfig(ConfigModel):
    num_channels: int = Field(22, ge=1, description="M, number of electrodes/channels")
    num_maxima: int = Field(8, ge=1, description="N, channels stimulated per frame")
    fft_size: int = Field(128, ge=2)
    hop: int = Field(16, ge=1)
    sample_rate_hz: int = Field(16000, gt=0)
    analysis_window: WindowKind = WindowKind.HANN
    band_edges: tuple[float, ...] | None = Field(None, description="M+1 ascending edges in Hz")
    lgf_base: float = Field(4 / 256, gt=0, description="B, envelope level mapped to magnitude 0")
    lgf_saturation: float = Field(150 / 256, gt=0, description="S, envelope level mapped to magnitude 1")
    lgf_rho: float = Field(416.2063, gt=0, description="LGF compression steepness")

    @root_validator(skip_on_failure=True)
    def _check_geometry(cls, values: dict[str, Any]) -> dict[str, Any]:  # noqa: N805
        num_channels, sample_rate = values["num_channels"], values["sample_rate_hz"]

        if values["num_maxima"] > num_channels:
            raise ValueError(f"num_maxima ({values['num_maxima']}) must not exceed num_channels ({num_channels})")

        if sample_rate % values["hop"]:
            raise ValueError(f"hop {values['hop']} does not divide sample rate {sample_rate} into whole frames")

        if values["lgf_base"] >= values["lgf_saturation"]:
            raise ValueError("lgf_base must be below lgf_saturation")

        edges = values.get("band_edges")
        if edges is None:
            if num_channels != len(DEFAULT_BAND_WIDTHS):
                raise ValueError(f"band_edges must be given explicitly for {num_channels} channels")
            edges = default_band_edges(sample_rate / values["fft_size"])
            values["band_edges"] = edges

        if len(edges) != num_channels + 1:
            raise ValueError(f"expected {num_channels + 1} band edges, got {len(edges)}")
        if any(hi <= lo for lo, hi in zip(edges, edges[1:])):
            raise ValueError("band_edges must be strictly increasing")
        if edges[-1] > sample_rate / 2:
            raise ValueError(f"band edge {edges[-1]} Hz is above Nyquist")

        return values

    @property
    def frame_rate_hz(self) -> float:
        return self.sample_rate_hz / self.hop

    @property
    def edges(self) -> tuple[float, ...]:
        assert self.band_edges is not None
        return self.band_edges


class Preprocessing(ConfigModel):
    """how audio is conditioned before encoding; recorded in the corpus manifest"""

    sample_rate_hz: int = Field(16000, gt=0)
    normalize_rms: bool = True
    target_rms_dbfs: float = -26.0


class TcnLayerSpec(ConfigModel):
    out_channels: int = Field(32, ge=1)
    kernel_size: int = Field(3, ge=1)
    dilation: int = Field(1, ge=1)
    activation: Activation = Activation.RELU


class AttentionSpec(ConfigModel):
    d_k: int = Field(32, ge=1)
    d_v: int = Field(32, ge=1)
    context: int = Field(64, ge=1, description="trailing causal window in frames, current frame included")
    residual: bool = True


def _default_tcn_layers() -> tuple[TcnLayerSpec, ...]:
    return tuple(TcnLayerSpec(dilation=d) for d in (1, 2, 4, 8))


class ModelConfig(ConfigModel):
    num_channels: int = Field(22, ge=1, description="M, width of the encoder features and of both heads")
    tcn_layers: tuple[TcnLayerSpec, ...] = Field(default_factory=_default_tcn_layers)
    attention: AttentionSpec = Field(default_factory=AttentionSpec)
    selection_threshold: float | None = Field(
        0.0, description="logit a channel must exceed to be stimulated at inference; null keeps exactly the top N"
    )

    @root_validator(skip_on_failure=True)
    def _check_widths(cls, values: dict[str, Any]) -> dict[str, Any]:  # noqa: N805
        layers, attention = values["tcn_layers"], values["attention"]
        if not layers:
            raise ValueError("at least one TCN layer is required")
        if attention.residual and attention.d_v != layers[-1].out_channels:
            raise ValueError(
                f"residual attention needs d_v ({attention.d_v}) equal to the last TCN width "
                f"({layers[-1].out_channels})"
            )
        return values

    @property
    def receptive_field(self) -> int:
        """frames of TCN history seen by one output frame"""
        return 1 + sum((layer.kernel_size - 1) * layer.dilation for layer in self.tcn_layers)


class TrainingConfig(ConfigModel):
    initial_lr: float = Field(1e-3, gt=0)
    max_epochs: int = Field(300, ge=1)
    early_stop_patience: int = Field(5, ge=1)
    lr_patience: int = Field(3, ge=1)
    lr_factor: float = Field(0.8, gt=0, lt=1)
    batch_size: int = Field(1, ge=1, description="files per optimizer step")
    loss_weight: float = Field(1.0, ge=0, description="lambda, BCE weight relative to MSE")
    masked_magnitude_loss: bool = Field(True, description="MSE only over the channels the ACE target stimulates")
    min_delta: float = Field(1e-6, ge=0, description="absolute improvement required to reset patience")
    rng_seed: int = 0
    adam_beta1: float = Field(0.9, ge=0, lt=1)
    adam_beta2: float = Field(0.999, ge=0, lt=1)
    adam_eps: float = Field(1e-8, gt=0)


class VocoderConfig(ConfigModel):
    carrier_freqs: tuple[float, ...] | None = Field(None, description="defaults to the filterbank channel centers")
    output_rate_hz: int = Field(16000, gt=0)
    envelope_smoothing_hz: float = Field(50.0, gt=0)
    inverse_lgf: bool = True

    @root_validator(skip_on_failure=True)
    def _check_carriers(cls, values: dict[str, Any]) -> dict[str, Any]:  # noqa: N805
        carriers = values.get("carrier_freqs")
        if carriers is None:
            return values
        if any(hi <= lo for lo, hi in zip(carriers, carriers[1:])):
            raise ValueError("carrier_freqs must be strictly increasing")
        if carriers and (carriers[0] <= 0 or carriers[-1] >= values["output_rate_hz"] / 2):
            raise ValueError("carrier_freqs must lie strictly between 0 Hz and Nyquist")
        return values


class StoiConfig(ConfigModel):
    internal_rate: int = Field(10000, gt=0)
    frame_length: int = Field(256, ge=2)
    hop: int = Field(128, ge=1)
    fft_size: int = Field(512, ge=2)
    num_bands: int = Field(15, ge=1)
    lowest_center_hz: float = Field(150.0, gt=0)
    segment_length: int = Field(30, ge=2, description="frames per correlation segment (about 384 ms)")
    dynamic_range_db: float = Field(40.0, gt=0, description="frames this far below the loudest are silent")
    clip_sdr_beta_db: float = -15.0
    reference_method: bool = Field(True, description="silence removal and SDR clipping; off = simplified variant")

    @root_validator(skip_on_failure=True)
    def _check_framing(cls, values: dict[str, Any]) -> dict[str, Any]:  # noqa: N805
        if values["frame_length"] != 2 * values["hop"]:
            raise ValueError("hop must be half the frame length")
        if values["fft_size"] < values["frame_length"]:
            raise ValueError("fft_size must not be shorter than the frame length")
        return values


class ExperimentConfig(ConfigModel):
    train_files: int = Field(80, ge=1)
    val_files: int = Field(20, ge=1)
    test_files: int = Field(20, ge=1)
    seed: int = 1234
    normalize_rms: bool = True
    target_rms_dbfs: float = -26.0
    save_audio: bool = False

    @property
    def total_files(self) -> int:
        return self.train_files + self.val_files + self.test_files

    def preprocessing(self, sample_rate_hz: int) -> Preprocessing:
        return Preprocessing(
            sample_rate_hz=sample_rate_hz,
            normalize_rms=self.normalize_rms,
            target_rms_dbfs=self.target_rms_dbfs,
        )


class GlobalConfig(ConfigModel):
    ace: AceConfig = Field(default_factory=AceConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    training: TrainingConfig = Field(default_factory=TrainingConfig)
    vocoder: VocoderConfig = Field(default_factory=VocoderConfig)
    stoi: StoiConfig = Field(default_factory=StoiConfig)
    experiment: ExperimentConfig = Field(default_factory=ExperimentConfig)

    @root_validator(skip_on_failure=True)
    def _check_sections_agree(cls, values: dict[str, Any]) -> dict[str, Any]:  # noqa: N805
        ace, model, vocoder = values["ace"], values["model"], values["vocoder"]
        if model.num_channels != ace.num_channels:
            raise ValueError(f"model.num_channels ({model.num_channels}) != ace.num_channels ({ace.num_channels})")
        if vocoder.carrier_freqs is not None and len(vocoder.carrier_freqs) != ace.num_channels:
            raise ValueError("vocoder.carrier_freqs needs one carrier per ACE channel")
        return values


class StoiResult(BaseModel):
    score: float = Field(..., ge=0, le=1, description="mean correlation floored at 0")
    raw_score: float = Field(..., description="mean correlation over all bands and segments")
    per_band: list[float]
    frames_used: int
    segments: int
    clean_envelopes: np.ndarray | None = None
    degraded_envelopes: np.ndarray | None = None

    class Config:
        arbitrary_types_allowed = True

    def summary_json(self) -> str:
        return self.json(exclude={"clean_envelopes", "degraded_envelopes"})


class ComparisonRow(BaseModel):
    file: str
    stoi_ace: float = Field(..., ge=0, le=1)
    stoi_model: float = Field(..., ge=0, le=1)


class ComparisonReport(BaseModel):
    rows: list[ComparisonRow]
    mean_ace: float
    mean_model: float
    mean_gap: float = Field(..., description="mean_ace - mean_model")
    history_file: str | None = None
    best_epoch: int | None = None
    config_hash: str | None = None
    inverse_lgf: bool = True

    @classmethod
    def from_rows(cls, rows: list[ComparisonRow], **kwargs: Any) -> "ComparisonReport":
        mean_ace = float(np.mean([r.stoi_ace for r in rows]))
        mean_model = float(np.mean([r.stoi_model for r in rows]))
        return cls(rows=rows, mean_ace=mean_ace, mean_model=mean_model, mean_gap=mean_ace - mean_model, **kwargs)
