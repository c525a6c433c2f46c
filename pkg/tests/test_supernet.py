import numpy as np
import pytest

from qaslab.circuit import (
    Architecture,
    ParamAssignment,
    classification_space,
    evaluate,
    sample_uniform,
    vqe_space,
)
from qaslab.sim import NoiseModel
from qaslab.supernet import (
    AssignmentRecord,
    BanditState,
    SupernetEnsemble,
    SupernetStore,
    assign_bandit,
    assign_greedy,
    eval_best,
    eval_min,
    init_store,
    make_ensemble,
)
from qaslab.tasks import VqeTask, baseline_vqe_space

OFF = NoiseModel.off()


def hf_like_ensemble():
    """Two stores for a CNOT-free RY subnet; store 1 holds angles preparing |1100>."""
    space = vqe_space(1)
    arch = Architecture(((0, 0, 0, 0),), ((False, False, False),))
    ens = make_ensemble(space, 2, seed=0)
    ens.stores[0].set_params(arch, ParamAssignment((np.zeros(4),)))
    ens.stores[1].set_params(arch, ParamAssignment((np.array([np.pi, np.pi, 0.0, 0.0]),)))
    return space, arch, ens


class TestStore:
    def test_classification_parameter_count(self):
        store = init_store(classification_space(), seed=0, eager=True)
        assert len(store.entries) == 3
        assert store.n_parameters() == 9

    def test_vqe_parameter_count(self):
        space = vqe_space()
        store = init_store(space, seed=0, eager=True)
        assert len(store.entries) == 48
        assert store.n_parameters() == 192
        assert store.n_parameters() <= space.max_parameters()

    def test_init_range_and_seed(self):
        a = init_store(vqe_space(), seed=3, eager=True)
        b = init_store(vqe_space(), seed=3, eager=True)
        assert a == b
        values = np.concatenate(list(a.entries.values()))
        assert values.min() >= 0 and values.max() < 2 * np.pi
        assert a != init_store(vqe_space(), seed=4, eager=True)

    def test_lazy_rows_independent_of_access_order(self):
        space, rng = vqe_space(), np.random.default_rng(0)
        archs = [sample_uniform(space, rng) for _ in range(10)]
        s1, s2 = SupernetStore(space, 7), SupernetStore(space, 7)
        p1 = [s1.get_params(a).flat() for a in archs]
        p2 = [s2.get_params(a).flat() for a in reversed(archs)][::-1]
        for x, y in zip(p1, p2):
            np.testing.assert_array_equal(x, y)

    def test_pair_masks_share_everything(self):
        space = vqe_space()
        store = init_store(space, seed=1)
        a = Architecture(((0, 1, 0, 1),) * 3, ((True, False, True),) * 3)
        b = Architecture(a.single, ((False, True, False),) * 3)
        np.testing.assert_array_equal(store.get_params(a).flat(), store.get_params(b).flat())

    def test_layout_change_gives_independent_layer(self):
        space = vqe_space()
        store = init_store(space, seed=1)
        a = Architecture(((0, 1, 0, 1),) * 3, ((True,) * 3,) * 3)
        b = Architecture(((0, 1, 0, 1), (1, 1, 0, 1), (0, 1, 0, 1)), a.pairs)
        pa, pb = store.get_params(a), store.get_params(b)
        np.testing.assert_array_equal(pa.layers[0], pb.layers[0])
        assert not np.array_equal(pa.layers[1], pb.layers[1])
        store.set_params(b, ParamAssignment(tuple(x + 1.0 for x in pb.layers)))
        after = store.get_params(a)
        np.testing.assert_array_equal(after.layers[1], pa.layers[1])
        np.testing.assert_array_equal(after.layers[0], pb.layers[0] + 1.0)

    def test_updates_visible_through_aliases(self):
        space = vqe_space()
        store = init_store(space, seed=2)
        a = sample_uniform(space, np.random.default_rng(0))
        b = Architecture(a.single, tuple(tuple(not x for x in row) for row in a.pairs))
        new = ParamAssignment(tuple(np.full(len(r), 0.5) for r in store.get_params(a).layers))
        store.set_params(a, new)
        np.testing.assert_array_equal(store.get_params(b).flat(), new.flat())

    def test_get_params_returns_copies(self):
        store = init_store(vqe_space(), seed=0)
        arch = sample_uniform(vqe_space(), np.random.default_rng(1))
        p = store.get_params(arch)
        p.layers[0][:] = 99.0
        assert not np.any(store.get_params(arch).layers[0] == 99.0)

    def test_set_params_shape_check(self):
        store = init_store(vqe_space(), seed=0)
        arch = sample_uniform(vqe_space(), np.random.default_rng(1))
        with pytest.raises(ValueError):
            store.set_params(arch, ParamAssignment((np.zeros(3), np.zeros(4), np.zeros(4))))

    def test_unknown_policy(self):
        with pytest.raises(ValueError):
            init_store(vqe_space(), policy="gaussian")


class TestSerialization:
    def test_round_trip_reproduces_evaluations(self, tmp_path):
        space = vqe_space()
        ens = make_ensemble(space, 3, seed=11)
        rng = np.random.default_rng(0)
        archs = [sample_uniform(space, rng) for _ in range(8)]
        before = [eval_min(ens, a, VqeTask(), OFF) for a in archs]
        ens.save(tmp_path / "ens.json")
        loaded = SupernetEnsemble.load(tmp_path / "ens.json")
        assert all(x == y for x, y in zip(loaded.stores, ens.stores))
        assert [eval_min(loaded, a, VqeTask(), OFF) for a in archs] == before

    def test_composite_pool_round_trip(self):
        space, arch = baseline_vqe_space()
        store = init_store(space, seed=5)
        store.get_params(arch)
        assert SupernetStore.from_dict(store.to_dict()) == store

    def test_fingerprint_mismatch(self):
        d = init_store(vqe_space(), seed=0).to_dict()
        with pytest.raises(ValueError):
            SupernetStore.from_dict(d, space=vqe_space(2))

    def test_record_round_trip(self):
        space = vqe_space()
        arch = sample_uniform(space, np.random.default_rng(0))
        rec = AssignmentRecord(4, arch, np.array([0.1, np.nan]), 0)
        d = rec.to_dict(space)
        assert d["losses"] == [0.1, None]
        back = AssignmentRecord.from_dict(d, space)
        assert back.arch == arch and back.chosen == 0 and np.isnan(back.losses[1])


class TestEnsemble:
    def test_distinct_seeds(self):
        ens = make_ensemble(vqe_space(), 5, seed=0)
        assert len({s.seed for s in ens.stores}) == 5
        with pytest.raises(ValueError):
            make_ensemble(vqe_space(), 0, seed=0)

    def test_update_isolation(self):
        space = vqe_space()
        ens = make_ensemble(space, 3, seed=0)
        arch = sample_uniform(space, np.random.default_rng(0))
        for s in ens.stores:
            s.get_params(arch)
        snapshot = ens.copy()
        ens.stores[1].set_params(arch, ParamAssignment(tuple(r + 1 for r in ens.stores[1].get_params(arch).layers)))
        assert ens.stores[0] == snapshot.stores[0]
        assert ens.stores[2] == snapshot.stores[2]
        assert ens.stores[1] != snapshot.stores[1]


class TestGreedy:
    def test_single_store(self):
        space = vqe_space()
        ens = make_ensemble(space, 1, seed=0)
        rng = np.random.default_rng(0)
        for _ in range(5):
            assert assign_greedy(ens, sample_uniform(space, rng), VqeTask(), OFF).chosen == 0

    def test_ties_go_to_lowest_index(self):
        space = vqe_space()
        store = init_store(space, seed=0)
        ens = SupernetEnsemble(space, [store.copy(), store.copy(), store.copy()])
        rec = assign_greedy(ens, sample_uniform(space, np.random.default_rng(1)), VqeTask(), OFF)
        assert rec.losses[0] == rec.losses[1] == rec.losses[2]
        assert rec.chosen == 0

    def test_picks_store_with_optimum(self):
        space, arch, ens = hf_like_ensemble()
        rec = assign_greedy(ens, arch, VqeTask(), OFF)
        want = [evaluate(space, arch, s.get_params(arch), VqeTask(), OFF) for s in ens.stores]
        np.testing.assert_allclose(rec.losses, want, atol=1e-12)
        assert rec.chosen == 1

    def test_eval_min_properties(self):
        space = vqe_space()
        rng = np.random.default_rng(2)
        ens = make_ensemble(space, 4, seed=3)
        single = make_ensemble(space, 1, seed=3)
        for _ in range(5):
            arch = sample_uniform(space, rng)
            rec = assign_greedy(ens, arch, VqeTask(), OFF)
            loss, w = eval_min(ens, arch, VqeTask(), OFF)
            assert (loss, w) == (rec.losses[rec.chosen], rec.chosen)
            assert loss <= rec.losses.mean()
            plain = evaluate(space, arch, single.stores[0].get_params(arch), VqeTask(), OFF)
            assert eval_min(single, arch, VqeTask(), OFF)[0] == pytest.approx(plain, abs=1e-12)

    def test_eval_best_with_store_subset(self):
        space, arch, ens = hf_like_ensemble()
        score, w = eval_best(ens, arch, VqeTask(), OFF, stores=[0])
        assert w == 0
        assert score.loss == pytest.approx(0.757)


class TestBandit:
    def test_first_pick_uniform(self):
        picks = []
        for seed in range(400):
            b = BanditState(2, 100, np.random.default_rng(seed))
            np.testing.assert_allclose(b.probabilities(), [0.5, 0.5])
            picks.append(b.draw())
        assert 0.4 < np.mean(picks) < 0.6
        assert BanditState(2, 100, np.random.default_rng(0)).draw() == BanditState(2, 100, np.random.default_rng(0)).draw()

    def test_converges_to_better_arm(self):
        T = 5000
        b = BanditState(2, T, np.random.default_rng(1))
        picks = []
        for _ in range(T):
            w = b.draw()
            b.update(w, 0.0 if w == 1 else 1.0)
            picks.append(w)
        picks = np.array(picks)
        assert picks[-1000:].mean() > picks[:1000].mean()
        assert picks[-1000:].mean() > 0.9

    def test_loss_scaling_clips(self):
        b = BanditState(2, 10, np.random.default_rng(0), loss_range=(-2.0, 2.0))
        b.update(0, 10.0)
        b.update(1, -2.0)
        assert b.log_weights[1] == 0.0
        assert b.log_weights[0] < 0.0

    def test_assign_bandit_single_evaluation(self):
        space, arch, ens = hf_like_ensemble()
        b = BanditState(2, 10, np.random.default_rng(3), loss_range=(-2.0, 2.0))
        rec = assign_bandit(ens, arch, VqeTask(), OFF, b)
        assert np.isnan(rec.losses).sum() == 1
        assert not np.isnan(rec.losses[rec.chosen])

    def test_single_store_degenerates_to_greedy(self):
        space = vqe_space()
        ens = make_ensemble(space, 1, seed=0)
        arch = sample_uniform(space, np.random.default_rng(0))
        rec = assign_bandit(ens, arch, VqeTask(), OFF, BanditState(1, 10, np.random.default_rng(0)))
        greedy = assign_greedy(ens, arch, VqeTask(), OFF)
        assert rec.chosen == 0
        assert rec.losses[0] == greedy.losses[0]
