import json
import zipfile
from pathlib import Path

import numpy as np
import pytest
import torch
from fastapi.testclient import TestClient

from hiermotion import semgraph
from hiermotion.harness import experiment
from hiermotion.harness.checkpoint import (
    Checkpoint,
    Corrupt,
    VersionMismatch,
    file_hash,
    from_module,
    load_checkpoint,
    save_checkpoint,
)
from hiermotion.harness.cli import main as cli_main, parse_edit_expr
from hiermotion.harness.config import ConfigError, ExperimentConfig
from hiermotion.harness.service import create_app
from hiermotion.motionrep import load_motion
from hiermotion.parser import parse_description

FIG1 = "a person walks forward, picks up an object with both hands, and stands still."


class TestCheckpoint:
    def test_roundtrip_bit_identical(self, tmp_path):
        rng = np.random.default_rng(0)
        blobs = {"layer.weight": rng.standard_normal((4, 4)),
                 "layer.bias": rng.standard_normal(4).astype(np.float32)}
        ckpt = Checkpoint(kind="test", config={"a": 1}, blobs=blobs,
                          rng_state=b"\x01\x02")
        path = tmp_path / "t.ckpt"
        save_checkpoint(ckpt, path)
        back = load_checkpoint(path, expected_kind="test")
        for name, arr in blobs.items():
            assert np.array_equal(back.blobs[name], arr)
            assert back.blobs[name].dtype == arr.dtype
        assert back.config == {"a": 1}
        assert back.rng_state == b"\x01\x02"

    def test_tampered_blob_names_blob(self, tmp_path):
        blobs = {"w": np.ones((2, 2))}
        path = tmp_path / "t.ckpt"
        save_checkpoint(Checkpoint("test", {}, blobs), path)
        # rewrite the blob payload without updating its digest
        with zipfile.ZipFile(path) as zf:
            manifest = zf.read("manifest.json")
        import io

        buf = io.BytesIO()
        np.save(buf, np.zeros((2, 2)), allow_pickle=False)
        with zipfile.ZipFile(path, "w") as zf:
            zf.writestr("manifest.json", manifest)
            zf.writestr("blobs/w.npy", buf.getvalue())
        with pytest.raises(Corrupt) as err:
            load_checkpoint(path)
        assert "'w'" in str(err.value)

    def test_version_mismatch_names_versions(self, tmp_path):
        path = tmp_path / "t.ckpt"
        save_checkpoint(Checkpoint("test", {}, {"w": np.ones(2)}), path)
        with zipfile.ZipFile(path) as zf:
            manifest = json.loads(zf.read("manifest.json"))
            blob = zf.read("blobs/w.npy")
        manifest["format_version"] = 0
        with zipfile.ZipFile(path, "w") as zf:
            zf.writestr("manifest.json", json.dumps(manifest))
            zf.writestr("blobs/w.npy", blob)
        with pytest.raises(VersionMismatch) as err:
            load_checkpoint(path)
        assert "0" in str(err.value) and "1" in str(err.value)

    def test_module_roundtrip(self, tmp_path):
        torch.manual_seed(0)
        module = torch.nn.Linear(3, 2)
        ckpt = from_module("test", {"d": 3}, module)
        path = tmp_path / "m.ckpt"
        save_checkpoint(ckpt, path)
        clone = torch.nn.Linear(3, 2)
        clone.load_state_dict(load_checkpoint(path).state_dict())
        for a, b in zip(module.parameters(), clone.parameters()):
            assert torch.equal(a, b)

    def test_not_a_zip(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"not a zip")
        with pytest.raises(Corrupt):
            load_checkpoint(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(Corrupt):
            load_checkpoint(tmp_path / "absent.ckpt")


class TestConfig:
    def test_roundtrip(self, tmp_path):
        cfg = ExperimentConfig(dataset_size=123, guidance=3.5)
        path = tmp_path / "cfg.json"
        cfg.save(path)
        back = ExperimentConfig.load(path)
        assert back.to_dict() == cfg.to_dict()

    def test_unknown_field_rejected(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"dataset_sise": 10})

    def test_sampler_overrides(self):
        cfg = ExperimentConfig()
        sampler = cfg.sampler(seed=5, steps={"specific": 30}, guidance=2.0)
        assert sampler.seed == 5
        assert sampler.steps["specific"] == 30
        assert sampler.steps["motion"] == cfg.sampler_steps["motion"]
        assert sampler.guidance == 2.0


class TestEditExpr:
    def graph(self):
        return parse_description("a person walks to the left.")

    def test_edge_by_text(self):
        g = self.graph()
        op = parse_edit_expr(g, "edge:walks->to the left weight=2.0")
        assert op.src == g.action_nodes()[0].id
        assert op.weight == 2.0

    def test_edge_unicode_arrow(self):
        g = self.graph()
        op = parse_edit_expr(g, "edge:m0→a0 weight=0.5")
        assert (op.src, op.dst, op.weight) == ("m0", "a0", 0.5)

    def test_mask_and_delete(self):
        g = self.graph()
        assert parse_edit_expr(g, "mask:walks").node == g.action_nodes()[0].id
        assert parse_edit_expr(g, "delete:to the left").kind.value == "delete_node"

    def test_modify(self):
        g = self.graph()
        op = parse_edit_expr(g, "modify:walks text=runs")
        assert op.text == "runs"

    def test_add(self):
        g = self.graph()
        op = parse_edit_expr(g, "add:walks level=specific text='quickly' "
                                "relation=ARGM-MNR")
        assert op.level.value == "specific"
        assert op.text == "quickly"
        assert op.relation.value == "ARGM-MNR"

    def test_unknown_ref(self):
        with pytest.raises(semgraph.UnknownNode):
            parse_edit_expr(self.graph(), "mask:flies")

    def test_garbled(self):
        with pytest.raises(semgraph.InvalidEdit):
            parse_edit_expr(self.graph(), "weight:2.0")


class TestCLI:
    def test_make_dataset(self, tmp_path, capsys):
        rc = cli_main(["make-dataset", "--out", str(tmp_path / "ds"),
                       "--size", "6", "--seed", "1"])
        assert rc == 0
        manifest = json.loads((tmp_path / "ds" / "manifest.json").read_text())
        assert manifest["dataset"]["size"] == 6
        motions = list((tmp_path / "ds" / "motions").glob("*.bin"))
        assert len(motions) == 6
        load_motion(motions[0])

    def test_generate_without_checkpoints_fails_cleanly(self, tmp_path, capsys):
        rc = cli_main(["generate", "--checkpoints", str(tmp_path / "none"),
                       "--text", "a person walks."])
        assert rc == 1
        err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert err["error"] == "missing-artifact"

    def test_generate_and_refine(self, mini_run_dir, tmp_path, capsys):
        out = tmp_path / "gen"
        rc = cli_main(["generate", "--checkpoints", str(mini_run_dir),
                       "--text", "a person walks to the left.",
                       "--seed", "3", "--out", str(out), "--name", "walk"])
        assert rc == 0
        manifest = json.loads((out / "walk.manifest.json").read_text())
        assert manifest["seed"] == 3
        motion = load_motion(out / "walk.motion.bin")
        assert motion.length == manifest["frames"]
        for level in ("motion", "action", "specific"):
            assert (out / f"walk.{level}.bin").exists()
        graph_doc = (out / "walk.graph.json").read_text()
        semgraph.from_json(graph_doc)

        rout = tmp_path / "ref"
        rc = cli_main(["refine", "--checkpoints", str(mini_run_dir),
                       "--graph", str(out / "walk.graph.json"),
                       "--edit", "edge:walks->to the left weight=2.0",
                       "--seed", "3", "--out", str(rout), "--name", "steered"])
        assert rc == 0
        diff = json.loads((rout / "steered.diff.json").read_text())
        assert diff["edits"][0]["kind"] == "set_edge_weight"
        assert "left" in diff["displacement"]

    def test_cli_determinism(self, mini_run_dir, tmp_path):
        for name in ("a", "b"):
            rc = cli_main(["generate", "--checkpoints", str(mini_run_dir),
                           "--text", "a person jumps.", "--seed", "11",
                           "--out", str(tmp_path), "--name", name])
            assert rc == 0
        assert file_hash(tmp_path / "a.motion.bin") == file_hash(tmp_path / "b.motion.bin")

    def test_evaluate_writes_report(self, mini_run_dir, tmp_path, capsys):
        rc = cli_main(["evaluate", "--checkpoints", str(mini_run_dir),
                       "--repeats", "2", "--out", str(tmp_path / "m.json")])
        assert rc == 0
        report = json.loads((tmp_path / "m.json").read_text())
        assert {"r_precision", "fid", "mm_dist", "diversity",
                "mmodality"} <= set(report)
        out = capsys.readouterr().out
        assert "Top-1" in out

    def test_bad_subcommand(self, capsys):
        with pytest.raises(SystemExit):
            cli_main(["frobnicate"])


class TestService:
    @pytest.fixture()
    def client(self, mini_bundle):
        return TestClient(create_app(mini_bundle), raise_server_exceptions=False)

    def test_health_reports_stable_hashes(self, client):
        first = client.get("/health").json()
        assert first["status"] == "ok"
        assert set(first["checkpoints"]) == {"vae_motion", "vae_action",
                                             "vae_specific", "denoiser", "evaluator"}
        again = client.get("/health").json()
        assert again == first

    def test_parse_fig1(self, client):
        resp = client.post("/parse", json={"text": FIG1})
        assert resp.status_code == 200
        graph = resp.json()["graph"]
        actions = [n for n in graph["nodes"] if n["level"] == "action"]
        assert len(actions) == 3

    def test_parse_empty_400(self, client):
        assert client.post("/parse", json={"text": "  "}).status_code == 400

    def test_generate_from_text(self, client):
        resp = client.post("/generate", json={"text": "a person walks.", "seed": 5})
        assert resp.status_code == 200
        body = resp.json()
        assert body["seed"] == 5
        assert len(body["motion"]["frames"]) >= 30
        assert len(body["motion"]["frames"][0]) == 68
        assert set(body["levels"]) == {"motion", "action", "specific"}
        assert "latency_ms" in body

    def test_refine_noop_identical_motion_payload(self, client):
        gen = client.post("/generate",
                          json={"text": "a person walks to the left.", "seed": 9})
        graph = gen.json()["graph"]
        edge = next(e for e in graph["edges"] if e["relation"] == "ARGM-DIR")
        noop = {"kind": "set_edge_weight", "src": edge["src"], "dst": edge["dst"],
                "weight": 1.0}
        ref = client.post("/refine", json={"graph": graph, "edits": [noop], "seed": 9})
        assert ref.status_code == 200
        assert ref.json()["motion"] == gen.json()["motion"]
        assert ref.json()["levels"] == gen.json()["levels"]

    def test_refine_weight_edit_changes_graph(self, client):
        gen = client.post("/generate",
                          json={"text": "a person walks to the left.", "seed": 2})
        graph = gen.json()["graph"]
        edge = next(e for e in graph["edges"] if e["relation"] == "ARGM-DIR")
        edit = {"kind": "set_edge_weight", "src": edge["src"], "dst": edge["dst"],
                "weight": 2.0}
        ref = client.post("/refine", json={"graph": graph, "edits": [edit], "seed": 2})
        assert ref.status_code == 200
        out_edge = next(e for e in ref.json()["graph"]["edges"]
                        if e["src"] == edge["src"] and e["dst"] == edge["dst"])
        assert out_edge["weight"] == 2.0
        assert ref.json()["edits"][0]["weight"] == 2.0

    def test_schema_violation_400(self, client):
        resp = client.post("/generate", json={"graph": {"version": 1}, "seed": 0})
        assert resp.status_code == 400
        assert "error" in resp.json()

    def test_bad_edit_400(self, client):
        gen = client.post("/generate", json={"text": "a person walks.", "seed": 0})
        graph = gen.json()["graph"]
        resp = client.post("/refine", json={
            "graph": graph,
            "edits": [{"kind": "delete_node", "node": "m0"}],
            "seed": 0})
        assert resp.status_code == 400

    def test_checkpoint_pin_mismatch_409(self, client):
        resp = client.post("/generate", json={"text": "a person walks.",
                                              "expected_checkpoint": "deadbeef"})
        assert resp.status_code == 409

    def test_checkpoint_pin_match_ok(self, client, mini_bundle):
        pin = mini_bundle.checkpoint_hashes["denoiser"]
        resp = client.post("/generate", json={"text": "a person walks.",
                                              "expected_checkpoint": pin,
                                              "seed": 1})
        assert resp.status_code == 200

    def test_generate_needs_text_or_graph(self, client):
        assert client.post("/generate", json={"seed": 1}).status_code == 400


class TestBundle:
    def test_load_missing_dir(self, tmp_path):
        from hiermotion.diffusion import MissingCheckpoint

        with pytest.raises(MissingCheckpoint):
            experiment.Bundle.load(tmp_path / "nothing")

    def test_generate_refine_consistency(self, mini_bundle):
        graph = mini_bundle.parse("a person walks to the left.")
        base = mini_bundle.generate(graph, seed=4)
        noop = mini_bundle.refine(graph, [], seed=4)
        assert np.array_equal(base.final.frames, noop.final.frames)

    def test_response_graph_is_used_graph(self, mini_bundle):
        from hiermotion.semgraph import EditKind, EditOp

        graph = mini_bundle.parse("a person walks to the left.")
        target = graph.specific_nodes()[0]
        src = next(e.src for e in graph.edges if e.dst == target.id)
        edit = EditOp(EditKind.SET_EDGE_WEIGHT, src=src, dst=target.id, weight=1.7)
        result = mini_bundle.refine(graph, [edit], seed=0)
        assert result.graph.edge(src, target.id).weight == 1.7
