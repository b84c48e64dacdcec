import io

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from ivoseg import data_io
from ivoseg.data_io import EngineConfig, benchmark_specs, generate_synthetic
from ivoseg.scribble_robot import generate_points, pick_round1_frame
from ivoseg.service import create_app, main
from ivoseg.workflow import Engine, Session, run_round


@pytest.fixture(scope="module")
def seq_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("sequences")
    seq = generate_synthetic(benchmark_specs()[0])
    data_io.save_sequence(seq, root / "bench00")
    nogt = root / "nogt"
    (nogt / "JPEGImages").mkdir(parents=True)
    for t, frame in enumerate(seq.frames):
        data_io.save_frame(frame, nogt / "JPEGImages" / f"{t:05d}.png")
    return root


@pytest.fixture()
def client(seq_dir):
    app = create_app(EngineConfig())
    with TestClient(app) as c:
        yield c


def round1_document(seq):
    frame = pick_round1_frame(seq.gt)
    rng = np.random.default_rng(0)
    sets = {
        obj: generate_points(seq.gt[frame], obj, 300, rng, frame_index=frame)
        for obj in range(1, seq.object_count + 1)
    }
    return data_io.scribble_sets_to_document(sets), sets, frame


class TestSessionLifecycle:
    def test_create_and_state(self, client, seq_dir):
        r = client.post("/sessions", json={"sequence_path": str(seq_dir / "bench00")})
        assert r.status_code == 200
        body = r.json()
        assert body["frame_count"] == 10
        assert body["has_ground_truth"] is True
        state = client.get(f"/sessions/{body['session_id']}").json()
        assert state["state"] == "idle"
        assert state["round"] == 0

    def test_unknown_session(self, client):
        assert client.get("/sessions/deadbeef").status_code == 404

    def test_missing_path_rejected(self, client):
        assert client.post("/sessions", json={}).status_code == 422

    def test_delete(self, client, seq_dir):
        sid = client.post(
            "/sessions", json={"sequence_path": str(seq_dir / "bench00")}
        ).json()["session_id"]
        assert client.delete(f"/sessions/{sid}").status_code == 200
        assert client.get(f"/sessions/{sid}").status_code == 404

    def test_frame_image(self, client, seq_dir):
        sid = client.post(
            "/sessions", json={"sequence_path": str(seq_dir / "bench00")}
        ).json()["session_id"]
        r = client.get(f"/sessions/{sid}/frames/0")
        assert r.status_code == 200
        img = Image.open(io.BytesIO(r.content))
        assert img.size == (64, 64)


class TestRounds:
    def test_happy_path_and_parity_with_library(self, client, seq_dir):
        seq = data_io.load_sequence(seq_dir / "bench00")
        doc, sets, frame = round1_document(seq)

        sid = client.post(
            "/sessions", json={"sequence_path": str(seq_dir / "bench00")}
        ).json()["session_id"]
        r = client.post(f"/sessions/{sid}/scribbles", json=doc)
        assert r.status_code == 200
        summary = r.json()
        assert summary["round"] == 1
        assert len(summary["masks"]) == 10

        # direct library run with the same inputs
        session = Session(sequence=seq, object_count=seq.object_count)
        run_round(session, Engine(EngineConfig()), frame, sets)

        for t in range(10):
            api_png = client.get(f"/sessions/{sid}/masks/1/{t}")
            assert api_png.status_code == 200
            api_labels = np.asarray(Image.open(io.BytesIO(api_png.content)))
            assert np.array_equal(api_labels, session.labels[1][t])

    def test_reannotation_surfaced_as_unprocessable(self, client, seq_dir):
        seq = data_io.load_sequence(seq_dir / "bench00")
        doc, _, _ = round1_document(seq)
        sid = client.post(
            "/sessions", json={"sequence_path": str(seq_dir / "bench00")}
        ).json()["session_id"]
        assert client.post(f"/sessions/{sid}/scribbles", json=doc).status_code == 200
        r = client.post(f"/sessions/{sid}/scribbles", json=doc)
        assert r.status_code == 422
        assert "annotated" in r.json()["detail"]

    def test_invalid_scribbles_rejected(self, client, seq_dir):
        sid = client.post(
            "/sessions", json={"sequence_path": str(seq_dir / "bench00")}
        ).json()["session_id"]
        bad = {"frame": 0, "strokes": [{"object_id": 1, "polarity": "nope", "points": [[1, 1]]}]}
        r = client.post(f"/sessions/{sid}/scribbles", json=bad)
        assert r.status_code == 422

    def test_conflict_while_running(self, client, seq_dir):
        seq = data_io.load_sequence(seq_dir / "bench00")
        doc, _, _ = round1_document(seq)
        sid = client.post(
            "/sessions", json={"sequence_path": str(seq_dir / "bench00")}
        ).json()["session_id"]
        # grab the per-session lock directly to simulate an in-flight round
        store = client.app.state.sessions
        assert store[sid].lock.acquire(blocking=False)
        try:
            r = client.post(f"/sessions/{sid}/scribbles", json=doc)
            assert r.status_code == 409
        finally:
            store[sid].lock.release()
        assert client.post(f"/sessions/{sid}/scribbles", json=doc).status_code == 200

    def test_overlay_endpoint(self, client, seq_dir):
        seq = data_io.load_sequence(seq_dir / "bench00")
        doc, _, _ = round1_document(seq)
        sid = client.post(
            "/sessions", json={"sequence_path": str(seq_dir / "bench00")}
        ).json()["session_id"]
        client.post(f"/sessions/{sid}/scribbles", json=doc)
        r = client.get(f"/sessions/{sid}/overlays/1/0")
        assert r.status_code == 200
        assert Image.open(io.BytesIO(r.content)).size == (64, 64)
        assert client.get(f"/sessions/{sid}/overlays/3/0").status_code == 404


class TestSuggestAndMetrics:
    def test_suggest_with_ground_truth(self, client, seq_dir):
        seq = data_io.load_sequence(seq_dir / "bench00")
        doc, _, _ = round1_document(seq)
        sid = client.post(
            "/sessions", json={"sequence_path": str(seq_dir / "bench00")}
        ).json()["session_id"]
        assert client.get(f"/sessions/{sid}/suggest").status_code == 422
        client.post(f"/sessions/{sid}/scribbles", json=doc)
        r = client.get(f"/sessions/{sid}/suggest").json()
        assert r["basis"] == "ground-truth-J"
        assert isinstance(r["frame"], int)

    def test_suggest_without_ground_truth(self, client, seq_dir):
        seq = data_io.load_sequence(seq_dir / "bench00")
        doc, _, _ = round1_document(seq)
        sid = client.post(
            "/sessions",
            json={"sequence_path": str(seq_dir / "nogt"), "object_count": 1},
        ).json()["session_id"]
        client.post(f"/sessions/{sid}/scribbles", json=doc)
        r = client.get(f"/sessions/{sid}/suggest").json()
        assert r["basis"] == "instability-heuristic"
        assert r["frame"] is not None

    def test_metrics_endpoint(self, client, seq_dir):
        seq = data_io.load_sequence(seq_dir / "bench00")
        doc, _, _ = round1_document(seq)
        sid = client.post(
            "/sessions", json={"sequence_path": str(seq_dir / "bench00")}
        ).json()["session_id"]
        client.post(f"/sessions/{sid}/scribbles", json=doc)
        m = client.get(f"/sessions/{sid}/metrics").json()
        assert m["rounds"] == 1
        assert 0.0 <= m["auc_j"] <= 1.0
        assert len(m["j"]) == 1

    def test_metrics_requires_ground_truth(self, client, seq_dir):
        sid = client.post(
            "/sessions",
            json={"sequence_path": str(seq_dir / "nogt"), "object_count": 1},
        ).json()["session_id"]
        assert client.get(f"/sessions/{sid}/metrics").status_code == 422


class TestCli:
    def test_eval_single_round(self, seq_dir, tmp_path, capsys):
        code = main([
            "eval", "--sequence", str(seq_dir / "bench00"),
            "--rounds", "1", "--seeds", "1", "--out", str(tmp_path / "out"),
        ])
        assert code == 0
        assert (tmp_path / "out" / "summary.json").is_file()
        assert (tmp_path / "out" / "metrics.txt").is_file()
        assert (tmp_path / "out" / "curves.png").is_file()
        assert (tmp_path / "out" / "seed0" / "round01" / "00000.png").is_file()

    def test_eval_missing_gt_fails(self, seq_dir, tmp_path, capsys):
        code = main([
            "eval", "--sequence", str(seq_dir / "nogt"),
            "--rounds", "1", "--out", str(tmp_path / "out2"),
        ])
        assert code == 2
        assert "nogt" in capsys.readouterr().err

    def test_eval_missing_dir_fails(self, tmp_path, capsys):
        code = main([
            "eval", "--sequence", str(tmp_path / "missing"), "--out", str(tmp_path / "o"),
        ])
        assert code == 2
        assert "missing" in capsys.readouterr().err

    def test_synth_writes_sequence(self, tmp_path):
        code = main(["synth", "--index", "1", "--out", str(tmp_path / "synth")])
        assert code == 0
        loaded = data_io.load_sequence(tmp_path / "synth")
        assert loaded.frame_count == 10
        assert loaded.gt is not None
