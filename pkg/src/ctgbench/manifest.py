"""Experiment manifests: strict JSON parsing, defaults, consistency checks.

Parsing is strict: any key the schema does not know is an error naming the
full field path, so a typo cannot silently drop a setting. Two profiles
fill different defaults through one code path: "desk" runs in minutes,
"paper" mirrors the full-scale protocol shape (big cohort, 250/250 test,
3600-sample padding, 1500-record limited-data ablation).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields as dc_fields

from .errors import ConfigurationError, ManifestError
from .generate import REGIMES, GeneratorParams
from .training import TrainConfig

PROFILES = {
    "desk": {"n": 900, "n_per_class_test": 50, "pad_len": 720, "limited_n": 300},
    "paper": {"n": 10363, "n_per_class_test": 250, "pad_len": 3600, "limited_n": 1500},
}
MODEL_KINDS = ("patch", "conv-attn", "tiny-lm")
ABLATION_KINDS = ("limited-data", "toco-removal", "temporal")


def _check_keys(d, allowed, path):
    unknown = set(d) - set(allowed)
    if unknown:
        worst = sorted(unknown)[0]
        raise ManifestError(f"{path}.{worst}" if path else worst, "unknown field")


def _expect(cond, path, message):
    if not cond:
        raise ManifestError(path, message)


@dataclass(frozen=True)
class SeedPlan:
    global_seed: int = 1
    data: int | None = None
    train: int | None = None
    ablation: int | None = None

    def resolve(self, stage):
        override = getattr(self, stage)
        return self.global_seed if override is None else override


@dataclass(frozen=True)
class CohortSpec:
    regime: str
    n: int
    n_per_class_test: int
    val_fraction: float = 0.05
    params: dict = field(default_factory=dict)

    def generator_params(self):
        return GeneratorParams(regime=self.regime, **self.params).validate()


@dataclass(frozen=True)
class PreprocessSpec:
    target_hz: int = 1
    pad_len: int = 720
    stride_window_s: int = 60
    stride_gap_s: int = 60


@dataclass(frozen=True)
class ModelSpec:
    name: str
    kind: str
    config: dict = field(default_factory=dict)
    train: TrainConfig = field(default_factory=TrainConfig)
    lora: dict | None = None

    @property
    def uses_toco(self):
        if self.kind == "tiny-lm":
            return self.config.get("style", "paired") == "paired"
        return True


@dataclass(frozen=True)
class AblationSpec:
    kind: str
    limited_n: int = 300
    mask_fraction: float = 0.10
    chunk_s: int = 60
    models: tuple = ()

    @property
    def condition(self):
        return self.kind


@dataclass(frozen=True)
class RemoteSpec:
    name: str = "remote"
    transport: str = "mock"
    script: str | None = None
    endpoint: str | None = None
    model: str | None = None
    api_key_env: str = "CTGBENCH_API_KEY"
    template: str = "detailed"
    timeout_s: float = 60.0
    max_retries: int = 3
    backoff: float = 1.0
    n_records: int | None = None


@dataclass(frozen=True)
class ExperimentManifest:
    name: str
    profile: str
    output_dir: str
    seeds: SeedPlan
    cohort: CohortSpec
    preprocessing: PreprocessSpec
    models: tuple
    ablations: tuple
    remote: RemoteSpec | None = None

    def model_named(self, name):
        for m in self.models:
            if m.name == name:
                return m
        raise ConfigurationError(f"manifest has no model named {name!r}")

    def to_dict(self):
        d = {
            "name": self.name,
            "profile": self.profile,
            "output_dir": self.output_dir,
            "seeds": {
                "global": self.seeds.global_seed,
                "data": self.seeds.data,
                "train": self.seeds.train,
                "ablation": self.seeds.ablation,
            },
            "cohort": asdict(self.cohort),
            "preprocessing": asdict(self.preprocessing),
            "models": [
                {
                    "name": m.name,
                    "kind": m.kind,
                    "config": dict(m.config),
                    "train": asdict(m.train),
                    "lora": dict(m.lora) if m.lora else None,
                }
                for m in self.models
            ],
            "ablations": [
                {**asdict(a), "models": list(a.models)} for a in self.ablations
            ],
            "remote": asdict(self.remote) if self.remote else None,
        }
        return d


def parse_manifest(data: dict) -> ExperimentManifest:
    _check_keys(data, {"name", "profile", "output_dir", "seeds", "cohort", "preprocessing",
                       "models", "ablations", "remote"}, "")
    profile = data.get("profile", "desk")
    _expect(profile in PROFILES, "profile", f"must be one of {sorted(PROFILES)}")
    prof = PROFILES[profile]

    seeds_d = data.get("seeds", {})
    _check_keys(seeds_d, {"global", "data", "train", "ablation"}, "seeds")
    seeds = SeedPlan(
        global_seed=int(seeds_d.get("global", 1)),
        data=seeds_d.get("data"),
        train=seeds_d.get("train"),
        ablation=seeds_d.get("ablation"),
    )

    _expect("cohort" in data, "cohort", "required section is missing")
    cohort_d = data["cohort"]
    _check_keys(cohort_d, {"regime", "n", "n_per_class_test", "val_fraction", "params"}, "cohort")
    _expect("regime" in cohort_d, "cohort.regime", "required field is missing")
    _expect(cohort_d["regime"] in REGIMES, "cohort.regime", f"must be one of {sorted(REGIMES)}")
    params_d = dict(cohort_d.get("params", {}))
    gen_fields = {f.name for f in dc_fields(GeneratorParams)} - {"regime"}
    _check_keys(params_d, gen_fields, "cohort.params")
    cohort = CohortSpec(
        regime=cohort_d["regime"],
        n=int(cohort_d.get("n", prof["n"])),
        n_per_class_test=int(cohort_d.get("n_per_class_test", prof["n_per_class_test"])),
        val_fraction=float(cohort_d.get("val_fraction", 0.05)),
        params=params_d,
    )
    _expect(cohort.n >= 4, "cohort.n", "cohort too small")
    _expect(0.0 < cohort.val_fraction < 1.0, "cohort.val_fraction", "must be in (0, 1)")

    prep_d = data.get("preprocessing", {})
    _check_keys(prep_d, {"target_hz", "pad_len", "stride_window_s", "stride_gap_s"}, "preprocessing")
    prep = PreprocessSpec(
        target_hz=int(prep_d.get("target_hz", 1)),
        pad_len=int(prep_d.get("pad_len", prof["pad_len"])),
        stride_window_s=int(prep_d.get("stride_window_s", 60)),
        stride_gap_s=int(prep_d.get("stride_gap_s", 60)),
    )

    models_l = data.get("models", [])
    _expect(isinstance(models_l, list) and models_l, "models", "at least one model is required")
    models = []
    for i, md in enumerate(models_l):
        path = f"models[{i}]"
        _check_keys(md, {"name", "kind", "config", "train", "lora"}, path)
        _expect("kind" in md, f"{path}.kind", "required field is missing")
        kind = md["kind"]
        _expect(kind in MODEL_KINDS, f"{path}.kind", f"must be one of {MODEL_KINDS}")
        train_d = dict(md.get("train", {}))
        train_fields = {f.name for f in dc_fields(TrainConfig)}
        _check_keys(train_d, train_fields, f"{path}.train")
        if "seed" not in train_d:
            train_d["seed"] = seeds.resolve("train")
        train = TrainConfig(**train_d).validate()
        lora = md.get("lora")
        if lora is not None:
            _check_keys(lora, {"r", "alpha", "seed"}, f"{path}.lora")
            _expect(kind == "tiny-lm", f"{path}.lora", "adapters apply to the tiny-lm family only")
            lora = {"r": int(lora.get("r", 8)), "alpha": float(lora.get("alpha", 16.0)),
                    "seed": int(lora.get("seed", seeds.resolve("train")))}
        if train.mode == "lora-finetune":
            _expect(lora is not None, f"{path}.train.mode", "lora-finetune requires a lora section")
        if lora is not None and train.mode != "lora-finetune":
            raise ManifestError(f"{path}.train.mode", "a lora section requires mode lora-finetune")
        config = dict(md.get("config", {}))
        models.append(ModelSpec(name=md.get("name", kind), kind=kind, config=config, train=train, lora=lora))
    names = [m.name for m in models]
    _expect(len(set(names)) == len(names), "models", f"duplicate model names {names}")

    abl_l = data.get("ablations", [])
    ablations = []
    for i, ad in enumerate(abl_l):
        path = f"ablations[{i}]"
        _check_keys(ad, {"kind", "limited_n", "mask_fraction", "chunk_s", "models"}, path)
        _expect("kind" in ad, f"{path}.kind", "required field is missing")
        _expect(ad["kind"] in ABLATION_KINDS, f"{path}.kind", f"must be one of {ABLATION_KINDS}")
        referenced = tuple(ad.get("models", names))
        for ref in referenced:
            _expect(ref in names, f"{path}.models", f"unknown model {ref!r}")
        spec = AblationSpec(
            kind=ad["kind"],
            limited_n=int(ad.get("limited_n", prof["limited_n"])),
            mask_fraction=float(ad.get("mask_fraction", 0.10)),
            chunk_s=int(ad.get("chunk_s", 60)),
            models=referenced,
        )
        _expect(0.0 <= spec.mask_fraction < 1.0, f"{path}.mask_fraction", "must be in [0, 1)")
        _expect(spec.chunk_s > 0, f"{path}.chunk_s", "must be positive")
        ablations.append(spec)

    remote_d = data.get("remote")
    remote = None
    if remote_d is not None:
        _check_keys(remote_d, {"name", "transport", "script", "endpoint", "model", "api_key_env",
                               "template", "timeout_s", "max_retries", "backoff", "n_records"}, "remote")
        remote = RemoteSpec(
            name=remote_d.get("name", "remote"),
            transport=remote_d.get("transport", "mock"),
            script=remote_d.get("script"),
            endpoint=remote_d.get("endpoint"),
            model=remote_d.get("model"),
            api_key_env=remote_d.get("api_key_env", "CTGBENCH_API_KEY"),
            template=remote_d.get("template", "detailed"),
            timeout_s=float(remote_d.get("timeout_s", 60.0)),
            max_retries=int(remote_d.get("max_retries", 3)),
            backoff=float(remote_d.get("backoff", 1.0)),
            n_records=remote_d.get("n_records"),
        )
        _expect(remote.transport in ("mock", "http"), "remote.transport", "must be 'mock' or 'http'")
        _expect(remote.template in ("detailed", "summarised"), "remote.template", "must be 'detailed' or 'summarised'")
        if remote.transport == "mock":
            _expect(remote.script is not None, "remote.script", "mock transport requires a script file")
        else:
            _expect(remote.endpoint is not None, "remote.endpoint", "http transport requires an endpoint")
            _expect(remote.model is not None, "remote.model", "http transport requires a model name")

    m = ExperimentManifest(
        name=data.get("name", "run"),
        profile=profile,
        output_dir=data.get("output_dir", "runs"),
        seeds=seeds,
        cohort=cohort,
        preprocessing=prep,
        models=tuple(models),
        ablations=tuple(ablations),
        remote=remote,
    )
    check_consistency(m)
    return m


def check_consistency(m: ExperimentManifest):
    """Cross-field rules that individual sections cannot see."""
    m.cohort.generator_params()
    pool_upper = m.cohort.n - 2 * m.cohort.n_per_class_test
    if pool_upper < 4:
        raise ConfigurationError(
            f"cohort.n {m.cohort.n} leaves no training pool after a {m.cohort.n_per_class_test}/class test set"
        )
    for a in m.ablations:
        if a.kind == "limited-data" and a.limited_n > pool_upper:
            raise ConfigurationError(
                f"limited_n {a.limited_n} exceeds the maximum training pool of {pool_upper}"
            )
        if a.kind == "toco-removal":
            for name in a.models:
                if not m.model_named(name).uses_toco:
                    raise ConfigurationError(
                        f"toco-removal requires a model trained on both channels; {name!r} does not use toco"
                    )
    if m.preprocessing.pad_len % 60 != 0:
        raise ConfigurationError(f"pad_len {m.preprocessing.pad_len} must be a whole number of minutes")
    return m


def load_manifest(path) -> ExperimentManifest:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as e:
            raise ManifestError("<file>", f"not valid JSON: {e}") from None
    return parse_manifest(data)


def save_manifest(path, m: ExperimentManifest):
    with open(path, "w") as fh:
        fh.write(json.dumps(m.to_dict(), indent=2, sort_keys=True) + "\n")


def default_manifest(regime="easy-separable", **overrides) -> ExperimentManifest:
    """The desk-scale three-model manifest used by docs and smoke tests."""
    data = {
        "name": f"desk-{regime}",
        "cohort": {"regime": regime},
        "models": [
            {"kind": "conv-attn", "train": {"max_epochs": 25, "patience": 8}},
            {"kind": "patch", "train": {"max_epochs": 60, "patience": 15}},
            {"kind": "tiny-lm", "name": "tiny-lm-lora",
             "train": {"mode": "lora-finetune", "lora_epochs": 3}, "lora": {"r": 8, "alpha": 16}},
        ],
        "ablations": [
            {"kind": "limited-data"},
            {"kind": "toco-removal"},
            {"kind": "temporal"},
        ],
    }
    data.update(overrides)
    return parse_manifest(data)
