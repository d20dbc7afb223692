"""Command-line entry point.

Subcommands: classify, borders, evaluate, uncertainty, synth, impute,
fit-flow, detloss. Exit codes: 0 success, 1 usage, 2 input error,
3 numeric failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import diffgsq
from .detection import IMPUTED_WEIGHT, BoundingBox, Detection, detection_loss
from .diffgsq import GRADES, MERGED_GRADES, MERGED_MORPHOLOGIES, MORPHOLOGIES, ClassPosterior
from .errors import Diverged, IdMismatch, NonFiniteDensity, VFAError
from .geometry import ratio_profile
from .io import RunConfig, read_annotations, read_csv_rows, write_annotations, write_csv
from .metrics import binary_report, confusion, one_vs_rest
from .plots import border_grid, border_svgs
from .rle import fit_flow, load_model, propagate_uncertainty, quantile_interval, save_model
from .synthdata import CohortSpec, generate_cohort, impute_knn

log = logging.getLogger("vfa")

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _stamp(cfg: RunConfig) -> str:
    return f"config_hash={cfg.hash()} seed={cfg.seed}"


def _out(cfg: RunConfig) -> Path:
    p = Path(cfg.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


# -- classify -----------------------------------------------------------------

CLASSIFY_COLUMNS = (
    ["patient_id", "level", "h_p", "h_m", "h_a", "apr", "mpr", "mar", "severity",
     "crisp_grade", "crisp_morphology", "fuzzy_grade", "fuzzy_morphology"]
    + [f"p_grade_{g}" for g in GRADES] + [f"p_morph_{m}" for m in MORPHOLOGIES]
    + [f"c_grade_{g}" for g in GRADES] + [f"c_morph_{m}" for m in MORPHOLOGIES]
)


def classify_records(records, th):
    """Per-record output rows plus ``(record, message)`` soft failures."""
    rows, failed = [], []
    for rec in records:
        try:
            r = ratio_profile(rec.keypoints)
        except VFAError as exc:
            failed.append((rec, str(exc)))
            continue
        fz = diffgsq.fuzzy_memberships(r, th)
        comb = [None] * 8
        if rec.p_img_grade is not None or rec.p_img_morph is not None:
            img = ClassPosterior(
                rec.p_img_grade if rec.p_img_grade is not None else np.ones(4) / 4, rec.p_img_morph
            )
            c = diffgsq.combine_posterior(fz, img)
            comb = list(c.grade) + list(c.morphology)
        rows.append(
            [rec.patient_id, rec.level, r.h_p, r.h_m, r.h_a, r.apr, r.mpr, r.mar,
             diffgsq.severity_score(r, th), diffgsq.crisp_grade(r, th), diffgsq.crisp_morphology(r, th),
             fz.grade_label, fz.morphology_label]
            + list(fz.grade) + list(fz.morphology) + comb
        )
    return rows, failed


def cmd_classify(args, cfg):
    records, rejects = read_annotations(args.annotations)
    if not records and not rejects:
        log.warning("%s holds no vertebrae", args.annotations)
    line_of = {}
    for line, row in read_csv_rows(args.annotations):
        line_of.setdefault(((row.get("patient_id") or "").strip(), (row.get("level") or "").strip()), line)
    rows, failed = classify_records(records, cfg.thresholds)
    rejects += [(line_of.get(rec.key, 0), f"line {line_of.get(rec.key, 0)}: {msg}") for rec, msg in failed]
    out = _out(cfg)
    write_csv(out / "classified.csv", CLASSIFY_COLUMNS, rows, _stamp(cfg))
    write_csv(out / "rejects.csv", ["line", "reason"], sorted(rejects))
    print(f"classified {len(rows)} vertebrae, rejected {len(rejects)} -> {out / 'classified.csv'}")
    return EXIT_OK


# -- borders ------------------------------------------------------------------

def cmd_borders(args, cfg):
    th = cfg.thresholds
    axis, g, m = border_grid(args.step, th)
    rows = [
        [axis[j], axis[i], GRADES[g[i, j]], MORPHOLOGIES[m[i, j]]]
        for i in range(len(axis)) for j in range(len(axis))
    ]
    out = _out(cfg)
    write_csv(out / "borders.csv", ["mpr", "mar", "grade", "morphology"], rows, _stamp(cfg))
    gsvg, msvg = border_svgs(args.step, th)
    (out / "borders_grade.svg").write_text(gsvg)
    (out / "borders_morphology.svg").write_text(msvg)
    print(f"wrote {len(rows)} grid points and 2 plots to {out}")
    return EXIT_OK


# -- evaluate -----------------------------------------------------------------

def _load_predictions(path):
    preds = {}
    for line, row in read_csv_rows(path):
        key = (row["patient_id"], row["level"])
        use_c = all((row.get(f"c_grade_{g}") or "") != "" for g in GRADES)
        pfx = ("c_grade_", "c_morph_") if use_c else ("p_grade_", "p_morph_")
        try:
            grade = np.array([float(row[pfx[0] + g]) for g in GRADES])
            morph = np.array([float(row[pfx[1] + m]) for m in MORPHOLOGIES])
        except (KeyError, ValueError) as exc:
            raise VFAError(f"{path} line {line}: bad posterior ({exc})")
        preds[key] = ClassPosterior(grade, morph)
    return preds


def evaluate(preds: dict, truth: list, merge: bool = False) -> dict:
    """All tables of the evaluation protocol, keyed by output file stem."""
    keys = [r.key for r in truth if r.grade is not None]
    missing = set(map("/".join, set(keys) ^ set(preds)))
    if missing:
        raise IdMismatch(missing)
    tgrade = np.array([GRADES.index(r.grade) for r in truth if r.grade is not None])
    tmorph = np.array([MORPHOLOGIES.index(r.morphology) for r in truth if r.grade is not None])
    pg = np.array([preds[k].grade for k in keys])
    pm = np.array([preds[k].morphology for k in keys])

    views = [
        binary_report("grade:normal_vs_fracture", 1 - pg[:, 0], tgrade > 0),
        binary_report("grade:normal+mild_vs_moderate+severe", pg[:, 2] + pg[:, 3], tgrade >= 2),
        *one_vs_rest("grade", pg, tgrade, GRADES),
        *one_vs_rest("morphology", pm, tmorph, MORPHOLOGIES),
    ]
    tables = {
        "metrics_vertebra": [v for v in views if v is not None],
        "confusion_grade": confusion([GRADES[i] for i in tgrade], [GRADES[i] for i in pg.argmax(1)], GRADES),
        "confusion_morphology": confusion(
            [MORPHOLOGIES[i] for i in tmorph], [MORPHOLOGIES[i] for i in pm.argmax(1)], MORPHOLOGIES),
    }

    # patients: max grade over vertebrae, max fracture score over vertebrae
    patients = {}
    for k, tg, g in zip(keys, tgrade, pg):
        patients.setdefault(k[0], []).append((tg, g))
    pt_true = np.array([max(t for t, _ in v) for v in patients.values()])
    pt_pred = np.array([max(int(np.argmax(g)) for _, g in v) for v in patients.values()])
    pt_frac = np.array([max(1 - g[0] for _, g in v) for v in patients.values()])
    pt_ms = np.array([max(g[2] + g[3] for _, g in v) for v in patients.values()])
    tables["metrics_patient"] = [v for v in (
        binary_report("patient:normal_vs_fracture", pt_frac, pt_true > 0),
        binary_report("patient:normal+mild_vs_moderate+severe", pt_ms, pt_true >= 2),
    ) if v is not None]
    tables["confusion_grade_patient"] = confusion(
        [GRADES[i] for i in pt_true], [GRADES[i] for i in pt_pred], GRADES)

    if merge:
        mg_true = [MERGED_GRADES[int(i >= 2)] for i in tgrade]
        mg_pred = [MERGED_GRADES[int(i)] for i in np.argmax(np.c_[pg[:, :2].sum(1), pg[:, 2:].sum(1)], 1)]
        tables["confusion_grade_merged"] = confusion(mg_true, mg_pred, MERGED_GRADES)
        merge_m = np.array([0, 1, 1, 2])
        pmm = np.c_[pm[:, 0], pm[:, 1] + pm[:, 2], pm[:, 3]]
        tables["confusion_morphology_merged"] = confusion(
            [MERGED_MORPHOLOGIES[i] for i in merge_m[tmorph]],
            [MERGED_MORPHOLOGIES[i] for i in pmm.argmax(1)], MERGED_MORPHOLOGIES)
        tables["metrics_morphology_merged"] = one_vs_rest("morphology_merged", pmm, merge_m[tmorph],
                                                          MERGED_MORPHOLOGIES)
    return tables


METRIC_COLUMNS = ["view", "n", "n_positive", "auc", "f1", "sensitivity", "specificity", "threshold"]


def cmd_evaluate(args, cfg):
    preds = _load_predictions(args.predictions)
    truth, rejects = read_annotations(args.truth)
    if rejects:
        log.warning("%d malformed truth rows skipped", len(rejects))
    tables = evaluate(preds, truth, cfg.merge_classes)
    out = _out(cfg)
    lines = [f"evaluation {_stamp(cfg)}", ""]
    for name, tab in tables.items():
        if name.startswith("metrics"):
            rows = [[r.row()[c] for c in METRIC_COLUMNS] for r in tab]
            write_csv(out / f"{name}.csv", METRIC_COLUMNS, rows, _stamp(cfg))
            lines.append(f"[{name}]")
            lines += [
                f"  {r.name:<48s} AUC={r.auc:.4f} F1={r.point.f1:.4f} "
                f"sens={r.point.sensitivity:.4f} spec={r.point.specificity:.4f} (n={r.n}, pos={r.n_positive})"
                for r in tab
            ]
        else:
            classes = _confusion_classes(name)
            rows = [[t] + list(row) for t, row in tab.items()]
            write_csv(out / f"{name}.csv", ["true"] + list(classes), rows, _stamp(cfg))
            lines.append(f"[{name}] rows normalised by true class")
            lines += ["  " + t.ljust(16) + " ".join(f"{v:6.3f}" for v in row) for t, row in tab.items()]
        lines.append("")
    (out / "report.txt").write_text("\n".join(lines))
    print("\n".join(lines))
    return EXIT_OK


def _confusion_classes(name):
    if "morphology_merged" in name:
        return MERGED_MORPHOLOGIES
    if "grade_merged" in name:
        return MERGED_GRADES
    return MORPHOLOGIES if "morphology" in name else GRADES


# -- uncertainty --------------------------------------------------------------

def uncertainty_columns():
    cols = ["patient_id", "level", "n", "majority_grade", "vote_fraction", "majority_morphology",
            "morph_vote_fraction", "eps_x", "eps_y", "eps_radial"]
    for grp, names in (("grade", GRADES), ("morph", MORPHOLOGIES)):
        for stat in ("mean", "std", "lo", "hi", "votes"):
            cols += [f"{grp}_{stat}_{c}" for c in names]
    return cols


def cmd_uncertainty(args, cfg):
    template = load_model(args.model)
    if cfg.rle_scale > 0:
        template = template.at(template.mu, (cfg.rle_scale, cfg.rle_scale))
    eps = quantile_interval(template, cfg.alpha, seed=cfg.seed)
    records, rejects = read_annotations(args.annotations)
    rows = []
    for i, rec in enumerate(records):
        if not rec.keypoints.complete:
            rejects.append((0, f"{rec.patient_id}/{rec.level}: missing keypoints"))
            continue
        models = [template.at(p) for p in rec.keypoints.points]
        rep = propagate_uncertainty(models, cfg.thresholds, cfg.n_draws, seed=[cfg.seed, i], alpha=cfg.alpha)
        row = [rec.patient_id, rec.level, rep.n, rep.majority_grade, rep.vote_fraction,
               rep.majority_morphology, rep.morph_vote_fraction, *eps.half_width, eps.radial]
        for stats in ((rep.grade_mean, rep.grade_std, rep.grade_lo, rep.grade_hi, rep.grade_votes),
                      (rep.morph_mean, rep.morph_std, rep.morph_lo, rep.morph_hi, rep.morph_votes)):
            for arr in stats:
                row += list(arr)
        rows.append(row)
    out = _out(cfg)
    write_csv(out / "uncertainty.csv", uncertainty_columns(), rows, _stamp(cfg))
    write_csv(out / "rejects.csv", ["line", "reason"], rejects)
    print(f"propagated {cfg.n_draws} draws for {len(rows)} vertebrae; "
          f"keypoint eps(alpha={cfg.alpha}) = {eps.half_width[0]:.3f}, {eps.half_width[1]:.3f} px "
          f"(radial {eps.radial:.3f})")
    return EXIT_OK


# -- thin wrappers --------------------------------------------------------------

def cmd_synth(args, cfg):
    lo = args.min_vertebrae or cfg.synth_min_vertebrae
    hi = args.max_vertebrae or cfg.synth_max_vertebrae
    spec = CohortSpec(
        n_patients=args.patients or cfg.synth_patients, vertebrae_range=(lo, hi),
        missing_prob=cfg.synth_missing if args.missing is None else args.missing,
        noise=cfg.synth_noise if args.noise is None else args.noise, seed=cfg.seed,
    )
    records = generate_cohort(spec, cfg.thresholds)
    out = _out(cfg)
    write_annotations(out / "annotations.csv", records, _stamp(cfg))
    print(f"generated {len(records)} vertebrae for {spec.n_patients} patients -> {out / 'annotations.csv'}")
    return EXIT_OK


def cmd_impute(args, cfg):
    records, rejects = read_annotations(args.annotations)
    k = args.k or cfg.knn_k
    filled = impute_knn(records, k)
    out = _out(cfg)
    write_annotations(out / "imputed.csv", filled, _stamp(cfg))
    n = sum(bool(r.imputed) for r in filled)
    print(f"imputed {n} vertebrae with k={k} ({len(rejects)} rows rejected) -> {out / 'imputed.csv'}")
    return EXIT_OK


def _read_residuals(path):
    rows = [r for _, r in read_csv_rows(path)]
    if not rows:
        raise VFAError(f"{path} holds no residuals")
    try:
        if "dx" in rows[0]:
            return np.array([[float(r["dx"]), float(r["dy"])] for r in rows])
        cols = ("x", "y", "mu_x", "mu_y", "b_x", "b_y")
        a = np.array([[float(r[c]) for c in cols] for r in rows])
    except (KeyError, ValueError) as exc:
        raise VFAError(f"{path}: expected columns dx,dy or x,y,mu_x,mu_y,b_x,b_y ({exc})")
    return a[:, 0:2], a[:, 2:4], a[:, 4:6]


def cmd_fit_flow(args, cfg):
    data = _read_residuals(args.residuals)

    def report(epoch, nll):
        if epoch % 10 == 0 or epoch == cfg.flow_epochs:
            print(f"epoch {epoch:4d}  nll {nll:.6f}")

    model = fit_flow(data, cfg.flow, callback=report)
    if cfg.rle_scale > 0:
        model = model.at(model.mu, (cfg.rle_scale, cfg.rle_scale))
    out = _out(cfg)
    save_model(model, out / "flow.txt")
    print(f"final nll {min(model.history):.6f} -> {out / 'flow.txt'}")
    return EXIT_OK


def read_boxes(path, truth: bool):
    """Detections grouped by ``image_id`` (a single group when absent)."""
    groups = {}
    for line, r in read_csv_rows(path):
        try:
            if "cx" in r:
                box = BoundingBox(float(r["cx"]), float(r["cy"]), float(r["w"]), float(r["h"]))
            else:
                box = BoundingBox.from_corners(float(r["x1"]), float(r["y1"]), float(r["x2"]), float(r["y2"]))
            prob = float(r.get("prob") or 1.0)
            weight = float(r.get("weight") or 1.0)
            if truth and (r.get("imputed") or "").strip().lower() in ("1", "true", "yes"):
                weight = IMPUTED_WEIGHT
            det = Detection(box, prob, weight)
        except (KeyError, ValueError) as exc:
            raise VFAError(f"{path} line {line}: {exc}")
        groups.setdefault((r.get("image_id") or "").strip(), []).append(det)
    return groups


def cmd_detloss(args, cfg):
    preds = read_boxes(args.predictions, truth=False)
    truths = read_boxes(args.truth, truth=True)
    if set(preds) - set(truths):
        raise IdMismatch(set(preds) - set(truths))
    total = 0.0
    rows = []
    for img, tr in sorted(truths.items()):
        res = detection_loss(preds.get(img, []), tr, cfg.lambda_iou, cfg.lambda_l1)
        total += res.value
        rows += [[img, p.truth, p.pred, p.weight, p.class_term, p.iou_term, p.l1_term, p.total]
                 for p in res.pairs]
    out = _out(cfg)
    write_csv(out / "detloss_pairs.csv",
              ["image_id", "truth", "pred", "weight", "class_term", "iou_term", "l1_term", "total"],
              rows, _stamp(cfg))
    print(f"detection loss {total!r} (lambda_iou={cfg.lambda_iou}, lambda_l1={cfg.lambda_l1})")
    return EXIT_OK


# -- argument parsing ---------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--seed", type=int, help="random seed (overrides config)")
    common.add_argument("--out", help="output directory (overrides config)")
    common.add_argument("--merge-classes", action="store_true", default=None,
                        help="also emit merged class views (wedge-like, normal+mild)")
    common.add_argument("--alpha", type=float, help="quantile / interval level")
    common.add_argument("--tau", type=float, help="fuzzy sigmoid temperature")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="vfa", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("classify", parents=[common], help="crisp and fuzzy GSQ classes per vertebra")
    s.add_argument("annotations")
    s.set_defaults(func=cmd_classify)

    s = sub.add_parser("borders", parents=[common], help="decision borders over the MPR/MAR plane")
    s.add_argument("--step", type=float, default=0.01)
    s.set_defaults(func=cmd_borders)

    s = sub.add_parser("evaluate", parents=[common], help="AUC/F1/sensitivity/specificity and confusion")
    s.add_argument("predictions", help="output of classify")
    s.add_argument("truth", help="annotation file with labels")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("uncertainty", parents=[common], help="Monte-Carlo class uncertainty per vertebra")
    s.add_argument("annotations")
    s.add_argument("model", help="flow model file from fit-flow")
    s.set_defaults(func=cmd_uncertainty)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic annotated cohort")
    s.add_argument("--patients", type=int)
    s.add_argument("--min-vertebrae", type=int)
    s.add_argument("--max-vertebrae", type=int)
    s.add_argument("--noise", type=float)
    s.add_argument("--missing", type=float)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("impute", parents=[common], help="k-NN imputation of missing keypoints")
    s.add_argument("annotations")
    s.add_argument("--k", type=int)
    s.set_defaults(func=cmd_impute)

    s = sub.add_parser("fit-flow", parents=[common], help="fit the residual flow to keypoint errors")
    s.add_argument("residuals", help="CSV with dx,dy or x,y,mu_x,mu_y,b_x,b_y")
    s.set_defaults(func=cmd_fit_flow)

    s = sub.add_parser("detloss", parents=[common], help="Hungarian-matched detection loss")
    s.add_argument("predictions")
    s.add_argument("truth")
    s.set_defaults(func=cmd_detloss)
    return p


def load_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    over = {k: v for k, v in (("seed", args.seed), ("out", args.out), ("alpha", args.alpha),
                              ("tau", args.tau), ("merge_classes", args.merge_classes)) if v is not None}
    return cfg.update(**over)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
    except (OSError, ValueError) as exc:
        print(f"vfa: bad configuration: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args, cfg)
    except (NonFiniteDensity, Diverged, ArithmeticError) as exc:
        print(f"vfa: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (VFAError, OSError, UnicodeDecodeError) as exc:
        print(f"vfa: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
