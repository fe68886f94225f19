# gtpc/engine/trainer.py
"""The training step and loop.

One step runs, in order: the supervised branch on weakly augmented labeled pairs; the
weak unlabeled pass producing pseudo-labels and gate agreement; the two CutMix-ed strong
views; the gated feature-perturbation branches; the weighted total; one SGD update.
"""
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Mapping, Sequence

import torch
import torch.nn.functional as F
from torch import Tensor

from gtpc.augment.cutmix import cutmix_batch
from gtpc.config import (
    DEVICE,
    NUM_THREADS,
    NUM_WORKERS,
    ExperimentConfig,
    FPTarget,
    GateTraining,
)
from gtpc.data.loaders import (
    TRAIN_STEP_STREAM,
    LabeledBatch,
    LabeledPairs,
    UnlabeledBatch,
    UnlabeledPairs,
    build_loader,
    collate_pairs,
    collate_views,
)
from gtpc.data.split import SplitManifest
from gtpc.engine.builder import build_model, build_optimizer
from gtpc.engine.evaluation import Metrics, evaluate
from gtpc.engine.optim import poly_lr
from gtpc.engine.state import EpochRecord, TrainingHistory
from gtpc.errors import ConfigError, DivergenceError
from gtpc.losses.consistency import (
    cross_entropy,
    feature_consistency_loss,
    image_consistency_loss,
    supervised_loss,
    total_loss,
)
from gtpc.losses.pseudo_label import PseudoLabelMask, make_pseudo_label
from gtpc.losses.report import LossReport
from gtpc.model.network import ChangeDetectionNet
from gtpc.model.types import FeatureBundle, ImagePair
from gtpc.perturb.gate import gate_scores, gate_select, perturb_all
from gtpc.perturb.operators import PerturbationContext, apply_gated_perturbations
from gtpc.services.checkpoint_store import save_checkpoint, snapshot
from gtpc.utils.seeding import seed_everything, stream_generator


@dataclass
class LossTerms:
    l_s: Tensor
    l_ui: Tensor
    l_uf: Tensor
    l_gate: Tensor
    total: Tensor
    objective: Tensor
    branches: List[Tensor] = field(default_factory=list)
    perturb_fraction: float | None = None

    def as_floats(self) -> Dict[str, float]:
        return {
            "l_s": float(self.l_s),
            "l_ui": float(self.l_ui),
            "l_uf": float(self.l_uf),
            "l_gate": float(self.l_gate),
            "total": float(self.total),
        }


def _strong_targets(mixed, tau: float, confidence_masking: bool) -> Tensor:
    if not confidence_masking:
        return mixed.pseudo_label
    return PseudoLabelMask(mixed.pseudo_label, mixed.confidence, tau).target(confidence_masking=True)


def _feature_branches(
    model: ChangeDetectionNet,
    bundle: FeatureBundle,
    config: ExperimentConfig,
    verdicts,
    pseudo_mask: Tensor,
    generator: torch.Generator,
    size,
) -> List[Tensor]:
    specs = config.active_specs()
    d1_inputs: Sequence[Tensor] = [bundle.d1] * len(specs)
    d4_inputs: Sequence[Tensor] = [bundle.d4] * len(specs)
    fixed = bundle.detach()
    if config.fp_target in (FPTarget.D1, FPTarget.D1_AND_D4):
        context = PerturbationContext(
            generator, pseudo_mask, branch_decoder=lambda k, z: model.decode_aux(fixed.d4, z, k)
        )
        d1_inputs = apply_gated_perturbations(bundle.d1, verdicts, specs, context)
    if config.fp_target in (FPTarget.D4, FPTarget.D1_AND_D4):
        context = PerturbationContext(
            generator, pseudo_mask, branch_decoder=lambda k, z: model.decode_aux(z, fixed.d1, k)
        )
        d4_inputs = apply_gated_perturbations(bundle.d4, verdicts, specs, context)
    return [
        model.decode_aux(d4_inputs[k - 1], d1_inputs[k - 1], k, size)
        for k in range(1, len(specs) + 1)
    ]


def compute_losses(
    model: ChangeDetectionNet,
    labeled: LabeledBatch,
    unlabeled: UnlabeledBatch | None,
    config: ExperimentConfig,
    generator: torch.Generator,
    warmup: bool = False,
) -> LossTerms:
    """Forward passes of every branch the variant enables, returning differentiable loss terms.

    During ``warmup`` the unlabeled branches are skipped and contribute zeros.
    """
    size = tuple(labeled.label.shape[-2:])
    bundle_l = model.extract(labeled.image_a, labeled.image_b)
    l_s = supervised_loss(model.decode_main(bundle_l, size), labeled.label)
    zero = l_s.new_zeros(())
    l_ui, l_uf, l_gate = zero, zero, zero
    branches: List[Tensor] = []
    perturb_fraction = None
    gate_on_pseudo = config.gate.training is GateTraining.PSEUDO

    if config.uses_gate and not gate_on_pseudo:
        # the gate decoder learns from labels but never moves the encoder
        l_gate = cross_entropy(model.decode_gate(bundle_l.detach(), size), labeled.label)

    if config.uses_unlabeled and not warmup:
        if unlabeled is None:
            raise ConfigError(f"variant {config.variant.value} needs an unlabeled batch")
        u_size = tuple(unlabeled.weak_a.shape[-2:])
        bundle_w = model.extract(unlabeled.weak_a, unlabeled.weak_b)
        with torch.no_grad():
            p_weak = F.softmax(model.decode_main(bundle_w, u_size), dim=1)[:, 1]
        pseudo = make_pseudo_label(p_weak, config.loss.tau)
        target = pseudo.target(config.loss.confidence_masking)

        p_gate = None
        if config.uses_gate:
            with torch.set_grad_enabled(gate_on_pseudo and torch.is_grad_enabled()):
                gate_logits = model.decode_gate(bundle_w.detach(), u_size)
            p_gate = F.softmax(gate_logits.detach(), dim=1)[:, 1]
            if gate_on_pseudo:
                l_gate = cross_entropy(gate_logits, target)

        if config.uses_image:
            augment = config.augment
            views = [
                cutmix_batch(
                    image_a,
                    image_b,
                    pseudo.mask,
                    generator,
                    augment.cutmix_prob,
                    augment.cutmix_area,
                    confidence=pseudo.source_confidence,
                )
                for image_a, image_b in (
                    (unlabeled.strong1_a, unlabeled.strong1_b),
                    (unlabeled.strong2_a, unlabeled.strong2_b),
                )
            ]
            # both strong views share one forward pass
            logits = model(torch.cat([v.image_a for v in views]), torch.cat([v.image_b for v in views]))
            logits_s1, logits_s2 = logits.chunk(2)
            targets = [_strong_targets(v, config.loss.tau, config.loss.confidence_masking) for v in views]
            l_ui = image_consistency_loss(logits_s1, logits_s2, targets[0], targets[1])

        if config.active_specs():
            if p_gate is not None:
                scores = gate_scores(p_gate, p_weak, config.gate.bin_threshold)
                verdicts = gate_select(scores, config.gate.quantile, config.gate.inverted, unlabeled.ids)
            else:
                verdicts = perturb_all(unlabeled.ids)
            perturb_fraction = sum(v.perturb for v in verdicts) / len(verdicts)
            branch_logits = _feature_branches(model, bundle_w, config, verdicts, pseudo.mask, generator, u_size)
            l_uf, branches = feature_consistency_loss(branch_logits, target)

    # float64 sum of the float32 terms
    total = total_loss(l_s.double(), l_ui.double(), l_uf.double(), config.effective_weights)
    objective = total + config.gate.loss_weight * l_gate
    return LossTerms(l_s, l_ui, l_uf, l_gate, total, objective, branches, perturb_fraction)


def train_step(
    model: ChangeDetectionNet,
    optimizer: torch.optim.Optimizer,
    labeled: LabeledBatch,
    unlabeled: UnlabeledBatch | None,
    config: ExperimentConfig,
    generator: torch.Generator,
    step: int = 0,
    epoch: int = 0,
) -> LossReport:
    model.train()
    warmup = epoch < config.loss.warmup_epochs
    terms = compute_losses(model, labeled, unlabeled, config, generator, warmup=warmup)
    if not torch.isfinite(terms.objective):
        raise DivergenceError(step=step, epoch=epoch, terms=terms.as_floats())
    optimizer.zero_grad(set_to_none=True)
    terms.objective.backward()
    optimizer.step()
    values = terms.as_floats()
    return LossReport(
        step=step,
        epoch=epoch,
        l_uf_branches=[float(b) for b in terms.branches],
        perturb_fraction=terms.perturb_fraction,
        lr=optimizer.param_groups[0]["lr"],
        **values,
    )


@dataclass
class TrainResult:
    model: ChangeDetectionNet
    history: TrainingHistory
    best_epoch: int
    best_metrics: Metrics | None
    checkpoint: Path | None = None
    last_checkpoint: Path | None = None


def _cycle(loader, dataset) -> Iterator:
    """Endless iteration; each new pass re-draws augmentations and shuffling."""
    passes = 0
    while True:
        dataset.set_pass(passes)
        yielded = False
        for batch in loader:
            yielded = True
            yield batch
        if not yielded:
            raise ValueError("labeled loader is empty")
        passes += 1


def _select(samples: Mapping[str, ImagePair], ids: Sequence[str]) -> List[ImagePair]:
    return [samples[i] for i in ids]


def train(
    config: ExperimentConfig,
    samples: Mapping[str, ImagePair],
    manifest: SplitManifest,
    out_dir: str | Path | None = None,
) -> TrainResult:
    """Trains for ``config.epochs`` epochs and keeps the weights with the best validation IoU.

    An epoch is one pass over the unlabeled set (or the labeled set for ``sup_only``); the
    labeled loader cycles independently. Checkpoints and history land in ``out_dir`` when given.
    """
    seed_everything(config.seed, config.deterministic, NUM_THREADS if config.deterministic else None)
    manifest.check_against(samples.keys())
    device = torch.device(DEVICE)
    out_dir = Path(out_dir) if out_dir is not None else None

    model = build_model(config).to(device)
    optimizer = build_optimizer(model, config.optimizer)
    generator = stream_generator(config.seed, TRAIN_STEP_STREAM)

    labeled_set = LabeledPairs(_select(samples, manifest.labeled_ids), config.augment, config.seed)
    labeled_loader = build_loader(
        labeled_set,
        config.batch_labeled,
        collate_pairs,
        config.seed,
        drop_last=len(labeled_set) >= config.batch_labeled,
        num_workers=NUM_WORKERS,
    )
    unlabeled_set = unlabeled_loader = None
    if config.uses_unlabeled:
        if not manifest.unlabeled_ids:
            raise ConfigError(f"variant {config.variant.value} needs unlabeled samples")
        unlabeled_set = UnlabeledPairs(_select(samples, manifest.unlabeled_ids), config.augment, config.seed)
        unlabeled_loader = build_loader(
            unlabeled_set,
            config.batch_unlabeled,
            collate_views,
            config.seed,
            drop_last=len(unlabeled_set) >= config.batch_unlabeled,
            num_workers=NUM_WORKERS,
        )
    if unlabeled_loader is not None:
        steps_per_epoch = len(unlabeled_loader)
    elif manifest.unlabeled_ids:
        # sup_only still runs as many steps as the semi-supervised variants
        steps_per_epoch = max(1, len(manifest.unlabeled_ids) // config.batch_unlabeled)
    else:
        steps_per_epoch = len(labeled_loader)
    total_steps = steps_per_epoch * config.epochs
    val_samples = _select(samples, manifest.val_ids)

    history = TrainingHistory()
    labeled_stream = _cycle(labeled_loader, labeled_set)
    best_iou, best_epoch, best_metrics, best_state = -1.0, -1, None, None
    started = time.perf_counter()
    step = 0
    print(
        f"---TRAIN: {config.variant.value} | {len(manifest.labeled_ids)} labeled, "
        f"{len(manifest.unlabeled_ids)} unlabeled | {config.epochs} epochs x {steps_per_epoch} steps---"
    )
    for epoch in range(config.epochs):
        unlabeled_stream = None
        if unlabeled_loader is not None:
            unlabeled_set.set_pass(epoch)
            unlabeled_stream = iter(unlabeled_loader)
        epoch_losses: List[float] = []
        for _ in range(steps_per_epoch):
            lr = poly_lr(config.optimizer.lr, step, total_steps, config.optimizer.poly_power)
            for group in optimizer.param_groups:
                group["lr"] = lr
            labeled_batch = next(labeled_stream).to(device)
            unlabeled_batch = next(unlabeled_stream).to(device) if unlabeled_stream is not None else None
            try:
                report = train_step(model, optimizer, labeled_batch, unlabeled_batch, config, generator, step, epoch)
            except DivergenceError as exc:
                if out_dir is not None:
                    exc.dump_path = str(
                        save_checkpoint(out_dir / "diverged.pt", model, config, epoch, optimizer=optimizer)
                    )
                    history.save(out_dir / "history.jsonl")
                print(f"⚠️ ERROR: {exc}")
                raise
            history.record_step(report)
            epoch_losses.append(report.total)
            step += 1

        metrics = evaluate(model, val_samples, config.data.eval_batch_size, device=device) if val_samples else None
        fractions = [s.perturb_fraction for s in history.steps[-steps_per_epoch:] if s.perturb_fraction is not None]
        record = EpochRecord(
            epoch=epoch,
            val_iou=metrics.iou if metrics else None,
            val_oa=metrics.oa if metrics else None,
            mean_loss=sum(epoch_losses) / len(epoch_losses),
            mean_perturb_fraction=sum(fractions) / len(fractions) if fractions else None,
        )
        history.record_epoch(record)
        perturbed = f" | perturbed {record.mean_perturb_fraction:.2f}" if fractions else ""
        validated = f" | val {metrics.summary()}" if metrics else ""
        print(f"---TRAIN: epoch {epoch + 1}/{config.epochs} | loss {record.mean_loss:.4f}{perturbed}{validated}---")

        score = metrics.iou if metrics else float(epoch)
        if score > best_iou:
            best_iou, best_epoch, best_metrics, best_state = score, epoch, metrics, snapshot(model)
            if out_dir is not None:
                save_checkpoint(
                    out_dir / "best.pt",
                    model,
                    config,
                    epoch,
                    metrics=metrics.model_dump() if metrics else None,
                    manifest=manifest.model_dump(mode="json"),
                )

    history.wall_clock = time.perf_counter() - started
    result = TrainResult(model=model, history=history, best_epoch=best_epoch, best_metrics=best_metrics)
    if out_dir is not None:
        history.save(out_dir / "history.jsonl")
        result.last_checkpoint = save_checkpoint(
            out_dir / "last.pt", model, config, config.epochs - 1, manifest=manifest.model_dump(mode="json")
        )
        result.checkpoint = out_dir / "best.pt"
    model.load_state_dict(best_state)
    print(f"✅ Training finished in {history.wall_clock:.1f}s; best epoch {best_epoch + 1}")
    return result
