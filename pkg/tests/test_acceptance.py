"""Exit criteria for the evaluation engine.

Every test is tagged with the criterion it belongs to; the terminal summary
prints one PASS/FAIL line per criterion (see conftest.py).
"""

import json
import math
import time

import numpy as np
import pytest

from disentangle_eval.cli import EXIT_OK, main
from disentangle_eval.dataset import FactorTable, validate_pairing
from disentangle_eval.discretize import BinnedCodes, discretize_codes
from disentangle_eval.information import (
    dataset_mean,
    entropy,
    jemmig,
    mi_matrix,
    mig,
    mutual_information,
)
from disentangle_eval.irs import irs_score
from disentangle_eval.oracles import brute_force_irs, brute_force_mi
from disentangle_eval.predictor import auc_roc, explicitness
from disentangle_eval.probe import probe_factor
from disentangle_eval.report import RunConfig, evaluate
from disentangle_eval.synth import (
    GENDER,
    DimRecipe,
    FactorSpec,
    GeneratorSpec,
    entangled_spec,
    generate,
    identity_spec,
    version_preset,
)

from conftest import make_dataset

AC1 = "AC1 MI oracle equivalence"
AC2 = "AC2 analytic MI and entropy"
AC3 = "AC3 MIG/JEMMIG bounds and fixtures"
AC4 = "AC4 JEMMIG worked case"
AC5 = "AC5 IRS differential test and fixtures"
AC6 = "AC6 Explicitness calibration"
AC7 = "AC7 linear-probe pattern reproduction"
AC8 = "AC8 end-to-end determinism"
AC9 = "AC9 dataset version grids"
AC10 = "AC10 scale"


# ---------------------------------------------------------------------------
# AC1, AC2, AC4: information estimators
# ---------------------------------------------------------------------------

@pytest.mark.acceptance(AC1)
def test_mi_matches_brute_force_on_1000_random_cases():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 65))
        bv, bz = (int(b) for b in rng.integers(1, 5, 2))
        v = rng.integers(0, bv, n)
        z = rng.integers(0, bz, n)
        worst = max(worst, abs(mutual_information(v, z, bv, bz) - brute_force_mi(v, z, bv, bz)))
    elapsed = time.perf_counter() - start
    print(f"max |difference| = {worst:.3e}, {elapsed:.2f}s")
    assert worst <= 1e-12
    assert elapsed < 10.0


@pytest.mark.acceptance(AC2)
def test_perfect_copy_gives_entropy():
    v = np.array([0, 0, 1, 1])
    assert mutual_information(v, v, 2, 2) == pytest.approx(entropy(v, 2), abs=1e-12)
    r = np.random.default_rng(1).integers(0, 4, 500)
    assert mutual_information(r, r, 4, 4) == pytest.approx(entropy(r, 4), abs=1e-12)


@pytest.mark.acceptance(AC2)
def test_independence_gives_zero():
    assert mutual_information([0, 0, 1, 1], [0, 1, 0, 1], 2, 2) == 0.0


@pytest.mark.acceptance(AC2)
def test_six_sample_worked_case():
    mi = mutual_information([0, 0, 0, 1, 1, 1], [0, 0, 1, 1, 2, 2], 2, 3)
    assert mi == pytest.approx(2.0 / 3.0, abs=1e-9)
    assert mi == pytest.approx(0.6667, abs=1e-4)


@pytest.mark.acceptance(AC4)
def test_jemmig_worked_case():
    v = np.array([0, 0, 0, 1, 1, 1])
    bins = np.stack([[0, 0, 1, 1, 2, 2], np.zeros(6, dtype=int)], axis=1)
    ds = make_dataset(v, np.zeros((6, 2)))
    binned = BinnedCodes(bins, (np.empty(0), np.empty(0)), np.array([3, 1]))
    raw, norm = jemmig(ds, binned, mi_matrix(ds, binned), 0)
    print(f"raw = {raw:.4f}, normalized = {norm:.4f}")
    assert raw == pytest.approx(1.2516, abs=1e-3)
    assert norm == pytest.approx(0.5158, abs=1e-3)


# ---------------------------------------------------------------------------
# AC3: MIG / JEMMIG on generator fixtures
# ---------------------------------------------------------------------------

def _info_scores(spec):
    ft, ct, _ = generate(spec)
    ds = validate_pairing(ft, ct)
    binned = discretize_codes(ct)
    mi = mi_matrix(ds, binned)
    migs = [mig(mi, i) for i in range(ft.n_factors)]
    jem = [jemmig(ds, binned, mi, i)[1] for i in range(ft.n_factors)]
    return dataset_mean(migs), dataset_mean(jem)


@pytest.mark.acceptance(AC3)
def test_identity_and_entangled_fixtures():
    start = time.perf_counter()
    mig_id, jem_id = _info_scores(identity_spec([25, 4, 2], n_dims=16, n_samples=10000,
                                                sigma=0.0, seed=0))
    mig_ent, _ = _info_scores(entangled_spec([25, 4, 2], n_dims=16, n_samples=10000, seed=0))
    elapsed = time.perf_counter() - start
    print(f"identity MIG = {mig_id:.4f}, JEMMIG = {jem_id:.4f}; "
          f"entangled MIG = {mig_ent:.4f}; {elapsed:.2f}s")
    assert mig_id >= 0.95
    assert jem_id >= 0.9
    assert mig_ent <= 0.05
    assert elapsed < 30.0


# ---------------------------------------------------------------------------
# AC5: IRS
# ---------------------------------------------------------------------------

@pytest.mark.acceptance(AC5)
def test_irs_matches_brute_force_on_200_random_datasets():
    rng = np.random.default_rng(77)
    worst, checked = 0.0, 0
    while checked < 200:
        n = int(rng.integers(8, 201))
        m = int(rng.integers(2, 4))
        cards = rng.integers(2, 5, m)
        factors = np.stack([rng.integers(0, c, n) for c in cards], axis=1)
        d = int(rng.integers(1, 5))
        pooled = factors @ rng.standard_normal((m, d)) + rng.standard_normal((n, d))
        target = int(rng.integers(0, m))
        ds = make_dataset(factors, np.zeros((n, 1)))
        try:
            fast = irs_score(ds, pooled, target)
        except ValueError:
            continue
        slow = brute_force_irs(factors.tolist(), pooled.tolist(), target)
        worst = max(worst, abs(fast - slow))
        checked += 1
    print(f"max |difference| = {worst:.3e}")
    assert worst <= 1e-10


def _grid(cards, reps):
    g = np.stack(np.meshgrid(*[np.arange(c) for c in cards], indexing="ij"), -1)
    return np.repeat(g.reshape(-1, len(cards)), reps, axis=0)


@pytest.mark.acceptance(AC5)
def test_irs_nuisance_invariant_fixture():
    factors = _grid([4, 3, 2], 5)
    pooled = np.stack([factors[:, 0], 2.0 * factors[:, 0] - 1.0], axis=1)
    ds = make_dataset(factors, np.zeros((len(factors), 1)))
    assert irs_score(ds, pooled, 0) == 1.0


@pytest.mark.acceptance(AC5)
def test_irs_pure_nuisance_fixture():
    factors = _grid([4, 2], 6)
    pooled = np.eye(2)[factors[:, 1]]
    ds = make_dataset(factors, np.zeros((len(factors), 1)))
    score = irs_score(ds, pooled, 0)
    print(f"pure-nuisance IRS = {score:.3e}")
    assert score == pytest.approx(0.0, abs=1e-12)


# ---------------------------------------------------------------------------
# AC6: Explicitness
# ---------------------------------------------------------------------------

@pytest.mark.acceptance(AC6)
def test_explicitness_noiseless_copy():
    rng = np.random.default_rng(6)
    y = rng.integers(0, 4, 2000)
    codes = rng.standard_normal((2000, 3, 8))
    codes[:, 1, :] = y[:, None]
    ds = make_dataset(y, codes)
    scores = [explicitness(ds, ds.codes, 0, scope).score for scope in ([1], None)]
    print(f"copy dim = {scores[0]:.4f}, all dims = {scores[1]:.4f}")
    assert min(scores) >= 0.99


@pytest.mark.acceptance(AC6)
def test_explicitness_pure_noise():
    rng = np.random.default_rng(7)
    y = rng.integers(0, 4, 2000)
    ds = make_dataset(y, rng.standard_normal((2000, 3, 8)))
    score = explicitness(ds, ds.codes, 0).score
    print(f"pure noise = {score:.4f}")
    assert score <= 0.1


@pytest.mark.acceptance(AC6)
def test_auc_pair_counting_case():
    assert auc_roc([0.1, 0.8, 0.2, 0.9], [False, False, True, True]) == 0.75


# ---------------------------------------------------------------------------
# AC7: linear probe on a planted dataset
# ---------------------------------------------------------------------------

PLANTED = {"speaking_style": 0, "speaker_id": 3, "speaker_gender": 4}


def planted_spec(n_samples=10000, seq_len=32, seed=0):
    """Style in dim 0, speaker in dim 3, gender in dim 4, noise elsewhere.

    The speaker carries a per-speaker temporal signature in addition to its
    scalar level, so its identity is linearly decodable from the T-vector.
    Gender is a function of speaker, so dim 3 is noisy enough that gender
    is not also decoded perfectly there, which would tie with dim 4.
    """
    dims = [DimRecipe((), 1.0) for _ in range(16)]
    dims[0] = DimRecipe((("speaking_style", 1.0),), 0.1)
    dims[3] = DimRecipe((("speaker_id", 1.0),), 1.0, patterns=(("speaker_id", 1.0),))
    dims[4] = DimRecipe((("speaker_gender", 1.0),), 0.1)
    return GeneratorSpec("planted", (FactorSpec("speaker_id", 25), FactorSpec("speaking_style", 4)),
                         tuple(dims), seq_len, derived=(GENDER,), n_samples=n_samples, seed=seed)


@pytest.fixture(scope="module")
def planted():
    start = time.perf_counter()
    ft, ct, _ = generate(planted_spec())
    ds = validate_pairing(ft, ct)
    results = {name: probe_factor(ds, ct, ft.index(name), runs=5, seed=0) for name in PLANTED}
    rng = np.random.default_rng(0)
    shuffled = FactorTable(ft.factors[rng.permutation(ft.n_samples)], ft.factor_names,
                           ft.cardinalities)
    sds = validate_pairing(shuffled, ct)
    chance = {name: probe_factor(sds, ct, ft.index(name), runs=1, seed=1) for name in PLANTED}
    elapsed = time.perf_counter() - start
    return ft, results, chance, elapsed


@pytest.mark.acceptance(AC7)
def test_probe_argmax_is_planted_dimension(planted):
    _, results, _, _ = planted
    for name, dim in PLANTED.items():
        acc = results[name].accuracies[:, :-1]
        winners = np.argmax(acc, axis=1)
        print(f"{name}: argmax per run {winners.tolist()}, planted {dim}")
        assert np.all(winners == dim)


@pytest.mark.acceptance(AC7)
def test_probe_all_dims_not_worse_than_best(planted):
    _, results, _, _ = planted
    for name, res in results.items():
        best = max(m for _, m, _ in res.per_dim)
        print(f"{name}: All = {res.all_combined[0]:.4f}, best single = {best:.4f}")
        assert res.all_combined[0] >= best - 0.02


@pytest.mark.acceptance(AC7)
def test_probe_shuffled_labels_at_chance(planted):
    ft, _, chance, _ = planted
    for name, res in chance.items():
        c = ft.cardinalities[ft.index(name)]
        accs = [m for _, m, _ in res.per_dim] + [res.all_combined[0]]
        print(f"{name}: chance {1 / c:.3f}, shuffled range [{min(accs):.3f}, {max(accs):.3f}]")
        assert all(abs(a - 1 / c) <= 0.05 for a in accs)


@pytest.mark.acceptance(AC7)
def test_probe_runtime(planted):
    elapsed = planted[3]
    print(f"probe fixture: {elapsed:.1f}s")
    assert elapsed < 300.0


# ---------------------------------------------------------------------------
# AC8, AC9: end-to-end runs through the command line
# ---------------------------------------------------------------------------

def _pipeline(root, seed, monkeypatch):
    # identical relative arguments from different working directories, so the
    # recorded flags match as well as the seed
    root.mkdir()
    monkeypatch.chdir(root)
    assert main(["synth", "--preset", "medium", "--seed", str(seed), "--dims", "4",
                 "--seq-len", "4", "--out-dir", "data"]) == EXIT_OK
    assert main(["eval", "--data", "data", "--seed", str(seed), "--epochs", "3",
                 "--out", "report.json"]) == EXIT_OK
    assert main(["probe", "--data", "data", "--seed", str(seed), "--epochs", "2",
                 "--runs", "2", "--out", "probe/probe.json"]) == EXIT_OK
    files = ["data/manifest.json", "data/codes.bin", "data/factors.csv", "report.json",
             "probe/probe.json"] + sorted(str(p.relative_to(root))
                                          for p in (root / "probe").glob("probe_*.csv"))
    return {name: (root / name).read_bytes() for name in files}


@pytest.mark.acceptance(AC8)
def test_same_seed_gives_byte_identical_outputs(tmp_path, monkeypatch):
    a = _pipeline(tmp_path / "a", 11, monkeypatch)
    b = _pipeline(tmp_path / "b", 11, monkeypatch)
    assert list(a) == list(b)
    print(f"compared {len(a)} files: {', '.join(a)}")
    for name in a:
        assert a[name] == b[name], name


@pytest.mark.acceptance(AC9)
@pytest.mark.parametrize("tag,total", [("small", 25000), ("medium", 50000), ("large", 109560)])
def test_preset_manifest_totals(tmp_path, tag, total):
    out = tmp_path / tag
    assert main(["synth", "--preset", tag, "--dims", "1", "--seq-len", "1",
                 "--out-dir", str(out)]) == EXIT_OK
    manifest = json.loads((out / "manifest.json").read_text())
    grid = {g["name"]: g["cardinality"] for g in manifest["factor_grid"]}
    assert manifest["total_utterances"] == total
    assert math.prod(grid.values()) == total
    assert sum(1 for _ in open(out / "factors.csv")) == total + 1


# ---------------------------------------------------------------------------
# AC10: full-size evaluation
# ---------------------------------------------------------------------------

@pytest.mark.slow
@pytest.mark.acceptance(AC10)
def test_full_eval_at_reference_size():
    spec = version_preset("medium", n_dims=16, seq_len=256, seed=0)
    ft, ct, _ = generate(spec)
    ds = validate_pairing(ft.select(spec.eval_factors), ct)
    timings = {}
    start = time.perf_counter()
    report = evaluate(ds, RunConfig(), timings=timings)
    elapsed = time.perf_counter() - start
    print(f"N = {ds.n_samples}, d = 16, T = 256: total {elapsed:.1f}s, "
          f"MI matrix {timings['mi_matrix']:.2f}s")
    assert len(report["factors"]) == 3
    assert all(len(f["rows"]) == 17 for f in report["factors"])
    assert timings["mi_matrix"] < 30.0
    assert elapsed < 600.0
