import numpy as np
import pytest

from partialhn.hypernet import (
    ConvChannelwiseHead,
    HyperConfig,
    HyperNetwork,
    compression_report,
    conv_head_param_count,
    generate_from_snapshot,
    load_hypernet_tensors,
    save_hypernet,
    snapshot_from_arrays,
    store_snapshot,
)
from partialhn.models import LayerSpec, build_slim_resnet, decompose
from partialhn.numerics import ContractError, Rng, Tensor, finite_diff_check
from partialhn.numerics import functional as F


def small_hn(k=3, nf=4, d=3, seed=0, dtype=np.float32, hidden=(6, 5), emb=4):
    m = build_slim_resnet(5, nf=nf, dtype=dtype)
    dm = decompose(m, k, classifier_classes=5)
    return HyperNetwork(dm, HyperConfig(emb_dim=emb, hidden=hidden, d=d, seed=seed)), dm


class TestGenerate:
    def test_deterministic(self):
        hn, _ = small_hn()
        a, b = hn.generate(2), hn.generate(2)
        for n in a:
            assert a[n].data.tobytes() == b[n].data.tobytes()

    def test_slot_shapes(self):
        m = build_slim_resnet(5, nf=20)
        hn = HyperNetwork(decompose(m, 3, 5))
        ws = hn.generate(0)
        assert ws["stage4.block1.conv2.weight"].shape == (160, 160, 3, 3)
        assert {n: t.shape for n, t in ws.items()} == hn.manifest

    def test_generated_weights_drive_model(self, rs):
        hn, dm = small_hn()
        logits = dm.forward(rs.standard_normal((2, 3, 8, 8)).astype(np.float32), hn.generate(0), train=True)
        assert logits.shape == (2, 5)

    def test_gradients_finite_difference(self, rs):
        hn, _ = small_hn(k=3, nf=2, d=2, dtype=np.float64, hidden=(4, 3), emb=3)
        hn.ensure_task(1)
        names = sorted(hn.params)
        probes = {n: rs.standard_normal(s) for n, s in hn.manifest.items()}

        def f(params):
            ws = hn.generate(1, dict(zip(names, params)))
            total = None
            for n, w in ws.items():
                term = F.sum(F.tanh(w) * probes[n])
                total = term if total is None else total + term
            return total

        assert finite_diff_check(f, [hn.params[n] for n in names]) < 1e-4

    def test_unseen_task_created_once(self):
        hn, _ = small_hn()
        hn.generate(7)
        row = hn.params["embed.7"]
        hn.generate(7)
        assert hn.params["embed.7"] is row
        assert hn.task_ids == [7]

    def test_distinct_tasks_differ(self):
        for seed in range(20):
            hn, _ = small_hn(seed=seed)
            a, b = hn.flat_output(0), hn.flat_output(1)
            assert np.abs(a.data - b.data).max() > 0

    def test_empty_manifest_rejected(self):
        m = build_slim_resnet(5, nf=2)
        dm = decompose(m, 4)
        dm.omega_shapes = {}
        with pytest.raises(ContractError):
            HyperNetwork(dm)


def enumerate_head(a, b, k, h, d):
    spec = LayerSpec("L", "conv", 4, a, b, k)
    head = ConvChannelwiseHead(spec, h, d, Rng(0), np.float32)
    return sum(v.size for v in head.init.values())


class TestParamCount:
    def test_spec_example(self):
        assert conv_head_param_count(160, 160, 3, 32, 8) == 58_880
        assert enumerate_head(160, 160, 3, 32, 8) == 58_880
        assert 160 * 160 * 9 == 230_400

    def test_d_zero_limit(self):
        assert conv_head_param_count(160, 160, 3, 32, 0) == 32 * 160 * 9

    def test_monotone_in_d(self):
        counts = [conv_head_param_count(20, 40, 3, 32, d) for d in range(1, 20)]
        assert all(x < y for x, y in zip(counts, counts[1:]))

    def test_random_tuples_match_enumeration(self):
        r = np.random.default_rng(0)
        for _ in range(50):
            a, b = int(r.integers(1, 40)), int(r.integers(1, 40))
            k = int(r.choice([1, 3, 5]))
            h, d = int(r.integers(1, 40)), int(r.integers(1, 20))
            assert conv_head_param_count(a, b, k, h, d) == enumerate_head(a, b, k, h, d)

    def test_head_rejects_d_zero(self):
        with pytest.raises(ContractError):
            ConvChannelwiseHead(LayerSpec("L", "conv", 4, 2, 2, 3), 4, 0, Rng(0), np.float32)


@pytest.fixture(scope="module")
def report():
    return compression_report(build_slim_resnet(5, nf=20))


class TestCompression:
    def test_anchor(self, report):
        assert report[-1]["d"] == 64 and report[-1]["compression_pct"] == 0

    def test_monotone(self, report):
        totals = [r["total_hn_params"] for r in report]
        assert all(x < y for x, y in zip(totals, totals[1:]))

    def test_pinned_totals(self, report):
        assert [r["total_hn_params"] for r in report] == [484_939, 529_767, 619_423, 798_735, 1_157_359]


class TestSnapshot:
    def test_snapshot_isolated_from_live(self):
        hn, _ = small_hn()
        hn.ensure_task(0)
        snap = store_snapshot(hn)
        before = {n: t.data.copy() for n, t in generate_from_snapshot(hn, snap, 0).items()}
        for p in hn.params.values():
            p.data += 1.0
        after = generate_from_snapshot(hn, snap, 0)
        for n in before:
            assert after[n].data.tobytes() == before[n].tobytes()

    def test_untrained_snapshot_equals_live(self):
        hn, _ = small_hn()
        hn.ensure_task(3)
        snap = store_snapshot(hn)
        live, frozen = hn.generate(3), generate_from_snapshot(hn, snap, 3)
        for n in live:
            assert live[n].data.tobytes() == frozen[n].data.tobytes()

    def test_snapshot_read_only(self):
        hn, _ = small_hn()
        hn.ensure_task(0)
        snap = store_snapshot(hn)
        with pytest.raises(ValueError):
            snap.params["embed.0"].data[0] = 1.0

    def test_checkpoint_round_trip(self, tmp_path):
        hn, _ = small_hn()
        hn.ensure_task(0)
        hn.ensure_task(1)
        snap = store_snapshot(hn)
        path = save_hypernet(tmp_path / "hn.ckpt", hn, snap)
        live, snap_arrays, meta, manifest = load_hypernet_tensors(path)
        back = snapshot_from_arrays(snap_arrays)
        assert back.task_ids == (0, 1)
        for n, p in snap.params.items():
            assert back.params[n].data.tobytes() == p.data.tobytes()
        for t in (0, 1):
            a, b = generate_from_snapshot(hn, snap, t), generate_from_snapshot(hn, back, t)
            for n in a:
                assert a[n].data.tobytes() == b[n].data.tobytes()
        assert meta["d"] == 3
        assert {e["name"] for e in manifest} == set(hn.manifest)
