import pytest

from judgeprint.nli import (CachingProvider, MissingScoresError, NLIResult, NullProvider,
                            PrecomputedProvider, ProviderDisabledError, load_store,
                            pair_key, save_store)


def triple(e, n, c):
    return NLIResult(p_entail=e, p_neutral=n, p_contradict=c)


class TestNLIResult:
    def test_valid_triple(self):
        t = triple(0.8, 0.1, 0.1)
        assert t.margin == pytest.approx(0.7)

    def test_sum_tolerance(self):
        triple(0.8, 0.1, 0.10005)  # within 1e-4
        with pytest.raises(ValueError, match="sum"):
            triple(0.8, 0.1, 0.2)

    def test_range_validated(self):
        with pytest.raises(ValueError, match="out of"):
            NLIResult(p_entail=1.2, p_neutral=-0.1, p_contradict=-0.1)


class TestProviders:
    def test_null_provider_refuses(self):
        with pytest.raises(ProviderDisabledError):
            NullProvider().score_batch([("a", "b")])

    def test_precomputed_returns_stored_triples_in_order(self):
        pairs = [("p1", "h1"), ("p2", "h2"), ("p3", "h3")]
        store = {pair_key(p, h): triple(0.1 * (i + 1), 0.9 - 0.1 * i, 0.0)
                 for i, (p, h) in enumerate(pairs)}
        provider = PrecomputedProvider(store)
        results = provider.score_batch(pairs)
        assert [r.p_entail for r in results] == pytest.approx([0.1, 0.2, 0.3])

    def test_precomputed_missing_key_lists_it(self):
        provider = PrecomputedProvider({})
        with pytest.raises(MissingScoresError) as err:
            provider.score_batch([("p", "h")])
        assert pair_key("p", "h") in err.value.keys

    def test_cache_avoids_second_provider_call(self):
        pairs = [("p1", "h1")]
        inner = PrecomputedProvider({pair_key("p1", "h1"): triple(0.7, 0.2, 0.1)})
        cached = CachingProvider(inner)
        first = cached.score_batch(pairs)
        assert inner.calls == 1
        second = cached.score_batch(pairs)
        assert inner.calls == 1  # served from cache
        assert first == second

    def test_store_roundtrip(self, tmp_path):
        inner = PrecomputedProvider({
            pair_key("p1", "h1"): triple(0.7, 0.2, 0.1),
            pair_key("p2", "h2"): triple(0.3, 0.3, 0.4),
        })
        cached = CachingProvider(inner)
        got = cached.score_batch([("p1", "h1"), ("p2", "h2")])
        path = tmp_path / "store.jsonl"
        cached.export_store(path)
        reloaded = PrecomputedProvider.from_file(path)
        again = reloaded.score_batch([("p1", "h1"), ("p2", "h2")])
        assert got == again

    def test_save_store_deterministic_bytes(self, tmp_path):
        entries = {pair_key("a", "b"): {"premise_hash": "x", "hypothesis_hash": "y",
                                        "p_entail": 0.5, "p_neutral": 0.25, "p_contradict": 0.25}}
        p1 = tmp_path / "s1.jsonl"
        p2 = tmp_path / "s2.jsonl"
        save_store(entries, p1)
        save_store(entries, p2)
        assert p1.read_bytes() == p2.read_bytes()
        assert load_store(p1)[pair_key("a", "b")].p_entail == 0.5

    def test_out_of_range_store_rejected(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"key_hash": "k", "p_entail": 1.5, "p_neutral": -0.5, "p_contradict": 0.0}\n')
        with pytest.raises(ValueError):
            load_store(path)


class TestRemote:
    def test_remote_retries_then_fails(self, monkeypatch):
        import judgeprint.nli as nli_mod
        calls = {"n": 0}

        class Boom:
            def __init__(self):
                self.status_code = 503

            def raise_for_status(self):
                raise nli_mod.requests.RequestException("boom")

        def fake_post(url, json=None, timeout=None):
            calls["n"] += 1
            raise nli_mod.requests.ConnectionError("refused")

        monkeypatch.setattr(nli_mod.requests, "post", fake_post)
        provider = nli_mod.RemoteProvider(url="http://localhost:1", backoff=0.001)
        with pytest.raises(nli_mod.ProviderUnavailableError, match="after 3 attempts"):
            provider.score_batch([("p", "h")])
        assert calls["n"] == 3

    def test_remote_parses_aligned_response(self, monkeypatch):
        import judgeprint.nli as nli_mod

        class Ok:
            status_code = 200

            def raise_for_status(self):
                pass

            def json(self):
                return {"model_id": "test-model",
                        "results": [{"p_entail": 0.9, "p_neutral": 0.05, "p_contradict": 0.05}]}

        monkeypatch.setattr(nli_mod.requests, "post", lambda *a, **k: Ok())
        provider = nli_mod.RemoteProvider(url="http://localhost:1")
        res = provider.score_batch([("p", "h")])
        assert res[0].p_entail == 0.9
        assert provider.model_id == "test-model"

    def test_remote_misaligned_response_rejected(self, monkeypatch):
        import judgeprint.nli as nli_mod

        class Bad:
            status_code = 200

            def raise_for_status(self):
                pass

            def json(self):
                return {"results": []}

        monkeypatch.setattr(nli_mod.requests, "post", lambda *a, **k: Bad())
        provider = nli_mod.RemoteProvider(url="http://localhost:1")
        with pytest.raises(nli_mod.ProviderError, match="misaligned"):
            provider.score_batch([("p", "h")])

    def test_env_var_supplies_url(self, monkeypatch):
        import judgeprint.nli as nli_mod
        monkeypatch.setenv(nli_mod.ENV_REMOTE_URL, "http://example:9/")
        provider = nli_mod.RemoteProvider()
        assert provider.url == "http://example:9"
