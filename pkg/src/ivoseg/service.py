"""CLI entry points and the HTTP session API.

The HTTP layer adds no segmentation logic: every round submitted over
the API goes through the same engine calls as the library, so identical
scribble documents yield bit-identical masks.
"""

from __future__ import annotations

import argparse
import io
import json
import sys
import threading
import uuid
from pathlib import Path

import numpy as np

from . import data_io
from .data_io import EngineConfig, load_config, load_sequence
from .errors import IvosegError, LoadError, ProtocolError
from .metrics import auc, curve_from_label_rounds
from .scribble_robot import robot_interact
from .workflow import Engine, Session, run_round, select_worst_frame


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------

def _make_engine(args) -> Engine:
    config = load_config(args.config) if getattr(args, "config", None) else EngineConfig()
    if getattr(args, "global_only", False):
        config.global_only = True
    return Engine(config)


def cli_eval(args) -> int:
    try:
        seq = load_sequence(args.sequence)
    except LoadError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if seq.gt is None:
        print(f"error: {args.sequence} has no ground-truth masks", file=sys.stderr)
        return 2
    engine = _make_engine(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    summary = {"sequence": seq.id, "rounds": args.rounds, "seeds": [], "auc_j": [], "auc_f": []}
    curves = []
    for seed in range(args.seeds):
        session = Session(sequence=seq, object_count=seq.object_count)
        results = robot_interact(session, engine, rounds=args.rounds, seed=seed)
        curve = curve_from_label_rounds(
            [res.labels for res in results], seq.gt, seq.object_count
        )
        curves.append(curve)
        for res in results:
            data_io.save_round_masks(
                session, res.round, out / f"seed{seed}" / f"round{res.round:02d}"
            )
        summary["seeds"].append(seed)
        summary["auc_j"].append(auc(curve.j))
        summary["auc_f"].append(auc(curve.f))
        print(f"seed {seed}: J per round {[f'{v:.3f}' for v in curve.j]} "
              f"AUC-J {summary['auc_j'][-1]:.4f}")

    summary["auc_j_mean"] = float(np.mean(summary["auc_j"]))
    summary["auc_f_mean"] = float(np.mean(summary["auc_f"]))
    (out / "summary.json").write_text(json.dumps(summary, indent=2))

    lines = ["seed\tround\tJ\tF"]
    for seed, curve in zip(summary["seeds"], curves):
        for r, (j, f) in enumerate(zip(curve.j, curve.f), start=1):
            lines.append(f"{seed}\t{r}\t{j:.4f}\t{f:.4f}")
    (out / "metrics.txt").write_text("\n".join(lines) + "\n")
    _plot_curves(curves, out / "curves.png")
    print(f"mean AUC-J {summary['auc_j_mean']:.4f}  mean AUC-F {summary['auc_f_mean']:.4f}")
    return 0


def _plot_curves(curves, path: Path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.5))
    for i, curve in enumerate(curves):
        rounds = range(1, curve.rounds + 1)
        ax.plot(rounds, curve.j, marker="o", label=f"seed {i} J")
        ax.plot(rounds, curve.f, marker="x", linestyle="--", label=f"seed {i} F")
    ax.set_xlabel("round")
    ax.set_ylabel("score")
    ax.set_ylim(0, 1)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def cli_synth(args) -> int:
    specs = data_io.benchmark_specs()
    if not 0 <= args.index < len(specs):
        print(f"error: index must be in [0, {len(specs) - 1}]", file=sys.stderr)
        return 2
    seq = data_io.generate_synthetic(specs[args.index])
    data_io.save_sequence(seq, args.out)
    print(f"wrote {seq.frame_count} frames of {seq.id} to {args.out}")
    return 0


def cli_calibrate(args) -> int:
    from .calibration import calibrate
    from .segmenter import HeadParams

    specs = data_io.benchmark_specs()[: args.sequences]
    sequences = [data_io.generate_synthetic(s) for s in specs]
    engine = _make_engine(args)
    params = calibrate(
        engine.config.head if args.config else HeadParams(),
        sequences,
        iterations=args.iterations,
        seed=args.seed,
    )
    data_io.save_head_params(params, args.out)
    print(f"calibrated parameters written to {args.out}")
    print(params)
    return 0


def cli_serve(args) -> int:
    import uvicorn

    config = load_config(args.config) if args.config else EngineConfig()
    app = create_app(config)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="ivoseg",
                                     description="interactive video object segmentation")
    sub = parser.add_subparsers(dest="command", required=True)

    p_eval = sub.add_parser("eval", help="run the automated robot evaluation")
    p_eval.add_argument("--sequence", required=True)
    p_eval.add_argument("--rounds", type=int, default=8)
    p_eval.add_argument("--seeds", type=int, default=3)
    p_eval.add_argument("--config")
    p_eval.add_argument("--out", default="eval_out")
    p_eval.add_argument("--global-only", action="store_true", dest="global_only",
                        help="ablation: disable the local transfer estimate")
    p_eval.set_defaults(func=cli_eval)

    p_serve = sub.add_parser("serve", help="start the HTTP session API")
    p_serve.add_argument("--port", type=int, default=8008)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--config")
    p_serve.set_defaults(func=cli_serve)

    p_synth = sub.add_parser("synth", help="emit a synthetic benchmark sequence")
    p_synth.add_argument("--index", type=int, default=0)
    p_synth.add_argument("--out", required=True)
    p_synth.set_defaults(func=cli_synth)

    p_cal = sub.add_parser("calibrate", help="fit head parameters on synthetic data")
    p_cal.add_argument("--sequences", type=int, default=3)
    p_cal.add_argument("--iterations", type=int, default=10)
    p_cal.add_argument("--seed", type=int, default=0)
    p_cal.add_argument("--config")
    p_cal.add_argument("--out", default="params.cfg")
    p_cal.set_defaults(func=cli_calibrate)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except IvosegError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


# ---------------------------------------------------------------------------
# HTTP API
# ---------------------------------------------------------------------------

class ApiSession:
    """Session record with its engine, lock, and lifecycle state."""

    def __init__(self, session: Session, engine: Engine):
        self.session = session
        self.engine = engine
        self.lock = threading.Lock()
        self.state = "idle"
        self.last_summary: dict | None = None


def _label_overlay(frame: np.ndarray, labels: np.ndarray, opacity: float = 0.5) -> np.ndarray:
    out = frame.astype(np.float64).copy()
    for k in range(1, int(labels.max()) + 1):
        color = np.asarray(data_io.PALETTE[k % len(data_io.PALETTE)], dtype=np.float64)
        sel = labels == k
        out[sel] = (1 - opacity) * out[sel] + opacity * color
    return np.clip(out, 0, 255).astype(np.uint8)


def _png_bytes(array: np.ndarray, indexed: bool = False) -> bytes:
    from PIL import Image

    if indexed:
        img = Image.fromarray(array.astype(np.uint8), mode="P")
        img.putpalette(data_io._palette_bytes())
    else:
        img = Image.fromarray(array.astype(np.uint8), mode="RGB")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def _instability_suggestion(session: Session) -> int | None:
    """No-ground-truth fallback: the frame whose labels changed the most
    between the last two rounds, else the frame farthest from any
    annotation."""
    annotated = set(session.annotated_frames())
    candidates = [t for t in range(session.sequence.frame_count) if t not in annotated]
    if not candidates:
        return None
    if session.round >= 2:
        prev, curr = session.labels[session.round - 1], session.labels[session.round]
        changes = [(int((prev[t] != curr[t]).sum()), -t) for t in candidates]
        best = max(zip(changes, candidates))[1]
        return best
    return max(candidates, key=lambda t: min(abs(t - a) for a in annotated))


def create_app(config: EngineConfig | None = None, frontend_dir: str | Path | None = None):
    from fastapi import Body, FastAPI, HTTPException
    from fastapi.responses import JSONResponse, Response

    app = FastAPI(title="ivoseg session API")
    store: dict[str, ApiSession] = {}
    app.state.sessions = store
    base_config = config or EngineConfig()

    def get(session_id: str) -> ApiSession:
        rec = store.get(session_id)
        if rec is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}")
        return rec

    @app.post("/sessions")
    def create_session(body: dict = Body(...)):
        path = body.get("sequence_path")
        if not path:
            raise HTTPException(status_code=422, detail="sequence_path is required")
        try:
            seq = load_sequence(path, object_count=body.get("object_count"))
        except LoadError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        session = Session(sequence=seq, object_count=seq.object_count)
        rec = ApiSession(session, Engine(base_config))
        session_id = uuid.uuid4().hex[:12]
        store[session_id] = rec
        return {
            "session_id": session_id,
            "sequence_id": seq.id,
            "frame_count": seq.frame_count,
            "object_count": seq.object_count,
            "has_ground_truth": seq.gt is not None,
            "state": rec.state,
        }

    @app.get("/sessions/{session_id}")
    def session_state(session_id: str):
        rec = get(session_id)
        return {
            "session_id": session_id,
            "state": rec.state,
            "round": rec.session.round,
            "annotated_frames": rec.session.annotated_frames(),
            "frame_count": rec.session.sequence.frame_count,
            "object_count": rec.session.object_count,
            "last_summary": rec.last_summary,
        }

    @app.delete("/sessions/{session_id}")
    def delete_session(session_id: str):
        get(session_id)
        del store[session_id]
        return {"deleted": session_id}

    @app.get("/sessions/{session_id}/frames/{t}")
    def frame_image(session_id: str, t: int):
        rec = get(session_id)
        if not 0 <= t < rec.session.sequence.frame_count:
            raise HTTPException(status_code=404, detail=f"frame {t} out of range")
        return Response(_png_bytes(rec.session.sequence.frames[t]), media_type="image/png")

    @app.post("/sessions/{session_id}/scribbles")
    def submit_scribbles(session_id: str, doc: dict = Body(...)):
        rec = get(session_id)
        if not rec.lock.acquire(blocking=False):
            raise HTTPException(status_code=409, detail="a round is already running")
        try:
            rec.state = "running-round"
            try:
                scribbles = data_io.scribble_document_to_sets(doc, rec.session.sequence.shape)
            except IvosegError as exc:
                raise HTTPException(status_code=422, detail=str(exc))
            try:
                result = run_round(rec.session, rec.engine, int(doc["frame"]), scribbles)
            except ProtocolError as exc:
                raise HTTPException(status_code=422, detail=str(exc))
            except IvosegError as exc:
                raise HTTPException(status_code=422, detail=str(exc))
            rec.last_summary = {
                "round": result.round,
                "annotated_frame": int(doc["frame"]),
                "per_frame_j": result.per_frame_j,
                "suggested_next": result.suggested_next,
                "masks": [
                    f"/sessions/{session_id}/masks/{result.round}/{t}"
                    for t in range(rec.session.sequence.frame_count)
                ],
            }
            return rec.last_summary
        finally:
            rec.state = "idle"
            rec.lock.release()

    @app.get("/sessions/{session_id}/masks/{round_index}/{t}")
    def mask_image(session_id: str, round_index: int, t: int):
        rec = get(session_id)
        labels = rec.session.labels.get(round_index)
        if labels is None or not 0 <= t < len(labels):
            raise HTTPException(status_code=404, detail="mask not available")
        return Response(_png_bytes(labels[t], indexed=True), media_type="image/png")

    @app.get("/sessions/{session_id}/overlays/{round_index}/{t}")
    def overlay_image(session_id: str, round_index: int, t: int, opacity: float = 0.5):
        rec = get(session_id)
        labels = rec.session.labels.get(round_index)
        if labels is None or not 0 <= t < len(labels):
            raise HTTPException(status_code=404, detail="overlay not available")
        frame = rec.session.sequence.frames[t]
        return Response(
            _png_bytes(_label_overlay(frame, labels[t], opacity)), media_type="image/png"
        )

    @app.get("/sessions/{session_id}/suggest")
    def suggest(session_id: str):
        rec = get(session_id)
        if rec.session.round < 1:
            raise HTTPException(status_code=422, detail="no completed round yet")
        if rec.session.sequence.gt is not None:
            frame = select_worst_frame(rec.session, rec.session.sequence.gt)
            basis = "ground-truth-J"
        else:
            frame = _instability_suggestion(rec.session)
            basis = "instability-heuristic"
        return {"frame": frame, "basis": basis, "complete": frame is None}

    @app.get("/sessions/{session_id}/metrics")
    def metrics(session_id: str):
        rec = get(session_id)
        seq = rec.session.sequence
        if seq.gt is None:
            raise HTTPException(status_code=422, detail="sequence has no ground truth")
        if rec.session.round < 1:
            raise HTTPException(status_code=422, detail="no completed round yet")
        rounds = [rec.session.labels[r] for r in sorted(rec.session.labels)]
        curve = curve_from_label_rounds(rounds, seq.gt, rec.session.object_count)
        return {
            "rounds": curve.rounds,
            "j": curve.j,
            "f": curve.f,
            "jf": curve.jf,
            "auc_j": auc(curve.j),
            "auc_f": auc(curve.f),
        }

    if frontend_dir is None:
        candidate = Path(__file__).resolve().parents[2] / "frontend"
        if (candidate / "index.html").is_file() and (candidate / "dist").is_dir():
            frontend_dir = candidate
    if frontend_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(frontend_dir), html=True), name="ui")

    @app.get("/")
    def root():
        return JSONResponse({"service": "ivoseg", "ui": "/ui/" if frontend_dir else None})

    return app


if __name__ == "__main__":
    raise SystemExit(main())
