import json

import pytest
from fastapi.testclient import TestClient

from hierlearn.service import create_app
from hierlearn.session import SessionStore


@pytest.fixture()
def client(tmp_path):
    app = create_app(SessionStore(tmp_path))
    with TestClient(app) as c:
        yield c


def make_session(client, **overrides):
    body = {
        "concepts": ["apple", "fruit", "food"],
        "budget": 10,
        "policy_mode": "random",
        "config": {"m": 500, "seed": 3},
    }
    body.update(overrides)
    resp = client.post("/sessions", json=body)
    assert resp.status_code == 200, resp.text
    return resp.json()["id"]


class TestSessionEndpoints:
    def test_create_and_describe(self, client):
        sid = make_session(client)
        got = client.get(f"/sessions/{sid}").json()
        assert got["concepts"] == ["apple", "fruit", "food"]
        assert got["budget"] == 10
        assert got["answered"] == 0

    def test_unknown_session_404(self, client):
        assert client.get("/sessions/zzz").status_code == 404

    def test_invalid_create_422(self, client):
        resp = client.post(
            "/sessions", json={"concepts": ["a", "a"], "budget": 5}
        )
        assert resp.status_code == 422

    def test_question_answer_loop(self, client):
        sid = make_session(client)
        q = client.get(f"/sessions/{sid}/next-question").json()
        assert not q["exhausted"]
        assert q["kind"] == "path"
        assert "{" not in q["text"] and q["j_label"] in q["text"]
        out = client.post(
            f"/sessions/{sid}/votes",
            json={"kind": "path", "i": q["i"], "j": q["j"], "votes": [1, 1, 1, 0]},
        ).json()
        assert out["answer"] == 1
        assert out["gamma"] == pytest.approx(0.25)
        assert out["remaining_budget"] == 9
        report = client.get(f"/sessions/{sid}/report").json()
        assert report["map_tree"]["n"] == 3
        assert report["threshold"] == 0.75
        assert len(report["uncertain"]) > 0

    def test_tie_flagged(self, client):
        sid = make_session(client)
        out = client.post(
            f"/sessions/{sid}/votes",
            json={"kind": "path", "i": 1, "j": 2, "votes": [1, 0]},
        ).json()
        assert out["tie"] and not out["applied"]

    def test_budget_exhaustion_signals(self, client):
        sid = make_session(client, budget=1)
        client.post(
            f"/sessions/{sid}/votes",
            json={"kind": "path", "i": 1, "j": 2, "votes": [1]},
        )
        q = client.get(f"/sessions/{sid}/next-question").json()
        assert q["exhausted"]
        resp = client.post(
            f"/sessions/{sid}/votes",
            json={"kind": "path", "i": 1, "j": 2, "votes": [1]},
        )
        assert resp.status_code == 409

    def test_invalid_votes_422(self, client):
        sid = make_session(client)
        resp = client.post(
            f"/sessions/{sid}/votes",
            json={"kind": "path", "i": 1, "j": 1, "votes": [1]},
        )
        assert resp.status_code == 422

    def test_insert_concept(self, client):
        sid = make_session(client)
        out = client.post(f"/sessions/{sid}/concepts", json={"label": "drink"})
        assert out.json()["n"] == 4
        dup = client.post(f"/sessions/{sid}/concepts", json={"label": "drink"})
        assert dup.status_code == 422
        report = client.get(f"/sessions/{sid}/report").json()
        assert report["labels"][-1] == "drink"

    def test_import_inline_content(self, client):
        sid = make_session(client)
        csv = "path,fruit,apple,1;1;1\npath,food,fruit,1;1;0\n"
        out = client.post(
            f"/sessions/{sid}/import", json={"content": csv}
        ).json()
        assert out["imported"] == 2
        assert out["remaining_budget"] == 8

    def test_import_malformed_422_with_line(self, client):
        sid = make_session(client)
        csv = "path,fruit,apple,1;1;1\npath,bogus,apple,1\n"
        resp = client.post(f"/sessions/{sid}/import", json={"content": csv})
        assert resp.status_code == 422
        assert "line 2" in resp.json()["detail"]
        assert client.get(f"/sessions/{sid}").json()["answered"] == 0

    def test_import_requires_content_or_path(self, client):
        sid = make_session(client)
        assert (
            client.post(f"/sessions/{sid}/import", json={}).status_code == 422
        )

    def test_state_survives_cache_reset(self, client, tmp_path):
        sid = make_session(client)
        client.post(
            f"/sessions/{sid}/votes",
            json={"kind": "path", "i": 2, "j": 1, "votes": [1, 1, 1]},
        )
        report_before = client.get(f"/sessions/{sid}/report").json()
        fresh = TestClient(create_app(SessionStore(tmp_path)))
        report_after = fresh.get(f"/sessions/{sid}/report").json()
        assert json.dumps(report_before, sort_keys=True) == json.dumps(
            report_after, sort_keys=True
        )


class TestAuthToken:
    def test_token_gate(self, tmp_path, monkeypatch):
        monkeypatch.setenv("HIERLEARN_TOKEN", "sesame")
        client = TestClient(create_app(SessionStore(tmp_path)))
        assert client.get("/sessions/x").status_code == 401
        ok = client.post(
            "/sessions",
            json={"concepts": ["a", "b"], "budget": 2, "config": {"m": 200}},
            headers={"Authorization": "Bearer sesame"},
        )
        assert ok.status_code == 200
