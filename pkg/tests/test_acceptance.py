"""End-to-end acceptance checks; each prints one PASS/FAIL line."""

import math

import numpy as np
import pytest
import torch

from conftest import TINY_MODEL, TINY_SIM, tiny_pretrain, tiny_run
from navdistill.config import desk_preset
from navdistill.controller import pure_pursuit, pursuit_command, rollout_closed_loop, zero_velocity_policy
from navdistill.evaluation import compare_methods, eval_offline, MetricsReport, run_ablation_suite
from navdistill.losses import barlow_twins_loss, mse_traj
from navdistill.metrics import ade, aoe, fde
from navdistill.simworld import DatasetConfig, make_dataset
from navdistill.simworld.dataset import dataset_fingerprint
from navdistill.simworld.types import WorldState, to_body_frame
from navdistill.simworld.world import OMEGA_MAX, V_MAX, step_world
from navdistill.student import finetune_student, predict, pretrain_student, student_from_checkpoint
from navdistill.teacher import TeacherModel, train_teacher
from navdistill.training import resolve_samples
from oracles import ref_ade, ref_aoe, ref_fde

SEEDS = (0, 1, 2)


@pytest.fixture
def report(capsys):
    def _report(n: int, name: str, ok: bool, detail: str = "") -> None:
        with capsys.disabled():
            print(f"\n[criterion {n:2d}] {'PASS' if ok else 'FAIL'} {name}: {detail}")
        assert ok, f"criterion {n} ({name}) failed: {detail}"

    return _report


# -- exact oracles ----------------------------------------------------------------


def _orthogonal_columns():
    return torch.tensor([[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]], dtype=torch.float64)


def test_c01_barlow_twins_exact(report):
    a = _orthogonal_columns()
    same = torch.tensor([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0], [5.0, 5.0]], dtype=torch.float64)
    identity = float(barlow_twins_loss(a, a, 5e-3))  # C = I
    ones = float(barlow_twins_loss(same, same, 5e-3))  # C = [[1, 1], [1, 1]]
    neg = float(barlow_twins_loss(a, -a, 5e-3))  # C = -I
    err = max(abs(identity), abs(ones - 0.01), abs(neg - 8.0))
    report(1, "barlow twins exact cases", err < 1e-9, f"losses {identity:.3g}, {ones:.12f}, {neg:.12f}")


def _rel_err(analytic: torch.Tensor, numeric: torch.Tensor) -> float:
    return float((analytic - numeric).norm() / numeric.norm().clamp(min=1e-12))


def test_c02_gradient_fidelity(report):
    g = torch.Generator().manual_seed(0)
    a = torch.randn(8, 4, generator=g, dtype=torch.float64, requires_grad=True)
    b = torch.randn(8, 4, generator=g, dtype=torch.float64)
    barlow_twins_loss(a, b).backward()
    eps = 1e-6
    num = torch.zeros_like(a)
    with torch.no_grad():
        for idx in np.ndindex(*a.shape):
            d = torch.zeros_like(a)
            d[idx] = eps
            num[idx] = (barlow_twins_loss(a + d, b) - barlow_twins_loss(a - d, b)) / (2 * eps)
    bt_err = _rel_err(a.grad, num)

    torch.manual_seed(0)
    m = TeacherModel(TINY_MODEL, TINY_SIM).double().eval()
    frames = torch.rand(2, 5, 16, 16, 3, generator=g, dtype=torch.float64)
    wps = torch.randn(2, 5, 2, generator=g, dtype=torch.float64)
    text = torch.tensor([[1, 2, 3], [4, -1, -1]])
    target = torch.randn(2, 5, 2, generator=g, dtype=torch.float64)
    params = {n: p.detach().clone() for n, p in m.named_parameters()}

    def loss(p):
        traj, _ = torch.func.functional_call(m, p, (frames, wps, text))
        return mse_traj(traj, target)

    grads = torch.func.grad(loss)(params)
    # central differences along a random direction in every parameter tensor
    worst = 0.0
    for name, p in params.items():
        v = torch.randn(p.shape, generator=g, dtype=torch.float64)
        h = 1e-5
        with torch.no_grad():
            up = loss({**params, name: p + h * v})
            dn = loss({**params, name: p - h * v})
        numeric = float((up - dn) / (2 * h))
        analytic = float((grads[name] * v).sum())
        if abs(numeric) > 1e-8:
            worst = max(worst, abs(analytic - numeric) / abs(numeric))
    ok = bt_err < 1e-3 and worst < 1e-3
    report(2, "gradient fidelity", ok, f"BT rel err {bt_err:.2e}, teacher worst rel err {worst:.2e}")


def test_c03_metric_oracles(report):
    rng = np.random.default_rng(0)
    pred, gt = rng.normal(size=(100, 5, 2)), rng.normal(size=(100, 5, 2))
    err = 0.0
    for p, t in zip(pred, gt):
        err = max(err, abs(ade(p, t) - ref_ade(p, t)), abs(fde(p, t) - ref_fde(p, t)), abs(aoe(p, t) - ref_aoe(p, t)))
    worked = [[(1.0, 0.0), (2.0, 0.0)], [(1.0, 1.0), (2.0, 2.0)]]
    ex_ade, ex_fde = ade(worked[0], worked[1]), fde(worked[0], worked[1])
    ex_aoe = aoe([(1.0, 0.0), (2.0, 0.0)], [(0.0, 1.0), (0.0, 2.0)])
    ok = err < 1e-9 and ex_ade == 1.5 and ex_fde == 2.0 and ex_aoe == math.pi / 2
    report(3, "metric oracles", ok, f"max oracle gap {err:.1e}; examples {ex_ade}, {ex_fde}, {ex_aoe:.12f}")


def test_c04_improvement_arithmetic(report):
    def rep(method, v):
        return MetricsReport([{"scenario": "All", "method": method, "aoe": 0.0, "ade": v, "fde": 0.0, "n": 1}],
                             {"dataset_hash": "published"})

    pct = compare_methods([rep("ours", 0.16), rep("baseline", 0.34)]).improvement_pct
    report(4, "improvement arithmetic", pct == 52.94, f"{pct}%")


# -- training sanity ---------------------------------------------------------------


@pytest.fixture(scope="module")
def small_data(tmp_path_factory):
    torch.set_num_threads(1)
    root = tmp_path_factory.mktemp("acc_small")
    return make_dataset(DatasetConfig(out=str(root / "ds"), episode_count=16, seed=7, sim=TINY_SIM))


def test_c05_overfit(report, small_data):
    cfg = desk_preset()
    model = cfg.model.model_copy(update={"conv_channels": (8, 16, 16, 16)})
    run = dict(steps=2000, max_train_samples=4, batch_size=4, learning_rate=1e-3, weight_decay=0.0)
    teacher = train_teacher(small_data, cfg.teacher.model_copy(update=run), model, TINY_SIM)
    mse = teacher.meta["metrics"]["train_loss"]
    from navdistill.student import scratch_checkpoint

    init = scratch_checkpoint(model, TINY_SIM, 0)
    policy = finetune_student(small_data, init, cfg.finetune.model_copy(update={**run, "mask_prob": 0.0}))
    tr_ade = policy.meta["metrics"]["train_ade"]
    ok = mse < 1e-3 and tr_ade < 0.05
    report(5, "overfit on 4 samples", ok, f"teacher train MSE {mse:.2e} m^2, student train ADE {tr_ade:.4f} m")


# -- desk-scale comparisons ------------------------------------------------------------


@pytest.fixture(scope="module")
def desk_data(tmp_path_factory):
    torch.set_num_threads(1)
    root = tmp_path_factory.mktemp("acc_desk")
    return make_dataset(DatasetConfig(out=str(root / "ds"), episode_count=200, seed=0))


@pytest.fixture(scope="module")
def ablation(desk_data):
    return run_ablation_suite(desk_data, SEEDS, desk_preset(), split="test")


def _ade(res, seed, method):
    return res.reports[(seed, method)].row("All")["ade"]


@pytest.mark.slow
def test_c06_distillation_benefit(report, ablation):
    full = np.array([_ade(ablation, s, "full") for s in SEEDS])
    bc = np.array([_ade(ablation, s, "no_pretrain") for s in SEEDS])
    wins = int((full < bc).sum())
    gain = float(np.mean((bc - full) / bc))
    detail = f"full {np.round(full, 4).tolist()} vs BC {np.round(bc, 4).tolist()}; wins {wins}/3, mean gain {100 * gain:.2f}%"
    report(6, "distillation beats behavior cloning", wins >= 2 and gain > 0, detail)


@pytest.mark.slow
def test_c07_text_ablation(report, ablation):
    full, no_text = ablation.mean("full"), ablation.mean("no_text")
    gain = (no_text - full) / no_text
    report(7, "narration helps pretraining", gain >= 0.05,
           f"seed-mean All ADE full {full:.4f} vs no_text {no_text:.4f} ({100 * gain:.2f}% better)")


@pytest.mark.slow
def test_c08_goal_infilling(report, ablation, desk_data):
    m = student_from_checkpoint(ablation.checkpoints[(0, "full")], ("policy",)).eval()
    val = resolve_samples(desk_data, "val", m.n_states, m.horizon)
    given = np.linalg.norm(predict(m, val, goal_masked=False)[:, -1] - val.goals, axis=-1).mean()
    masked = np.linalg.norm(predict(m, val, goal_masked=True)[:, -1] - val.goals, axis=-1).mean()
    report(8, "goal conditioning", given < masked, f"final-waypoint distance to goal {given:.4f} m given vs {masked:.4f} m masked")


def test_c09_controller(report):
    rng = np.random.default_rng(0)
    bounded = True
    for _ in range(10_000):
        traj = rng.uniform(-10, 10, size=(int(rng.integers(1, 9)), 2))
        v, w = pure_pursuit(traj)
        bounded &= 0.0 <= v <= V_MAX and -OMEGA_MAX <= w <= OMEGA_MAX
    w_state = WorldState(robot_pose=(0.0, 0.3, 0.0))
    dt = 0.05
    for _ in range(int(5.0 / dt)):
        line = np.stack([w_state.robot_pose[0] + np.linspace(0.2, 2.0, 10), np.zeros(10)], axis=1)
        w_state = step_world(w_state, pure_pursuit(to_body_frame(w_state.robot_pose, line)), dt)
    lateral = abs(w_state.robot_pose[1])
    _, omega = pursuit_command((0.0, 0.2), 0.1)
    ok = bounded and lateral < 0.05 and abs(omega - 1.0) < 1e-9
    report(9, "pure pursuit", ok, f"bounds {'held' if bounded else 'violated'}, lateral error {lateral:.4f} m, omega {omega:.12f}")


@pytest.mark.slow
def test_c10_closed_loop(report, ablation):
    policy = ablation.checkpoints[(0, "full")]
    cfg = desk_preset().controller
    runs = [rollout_closed_loop(policy, "FrontalApproach", s, cfg) for s in range(10)]
    zero = [rollout_closed_loop(zero_velocity_policy, "FrontalApproach", s, cfg) for s in range(10)]
    succ = sum(r.success for r in runs)
    coll = sum(r.collisions > 0 for r in runs)
    zsucc = sum(r.success for r in zero)
    ok = succ >= 7 and coll <= 3 and zsucc == 0
    report(10, "closed-loop FrontalApproach", ok, f"policy success {succ}/10, collisions {coll}/10; zero policy success {zsucc}/10")


# -- invariants ------------------------------------------------------------------------


def test_c11_determinism(report, tmp_path):
    torch.set_num_threads(1)
    outputs = []
    for rep in range(2):
        d = make_dataset(DatasetConfig(out=str(tmp_path / f"ds{rep}"), episode_count=8, seed=5, sim=TINY_SIM))
        t = train_teacher(d, tiny_run(steps=5), TINY_MODEL)
        p = pretrain_student(d, t, tiny_pretrain(steps=5, batch_size=16))
        f = finetune_student(d, p, tiny_run(steps=5))
        r = eval_offline(f, d, "train")
        cl = rollout_closed_loop(f, "Crowd", 3).row()
        outputs.append((dataset_fingerprint(d.root), t.to_bytes(), p.to_bytes(), f.to_bytes(), r.to_csv(), cl))
    names = ("dataset", "teacher", "pretrained", "policy", "offline report", "closed loop")
    same = [n for n, a, b in zip(names, *outputs) if a == b]
    report(11, "determinism", len(same) == len(names), f"identical reruns: {', '.join(same)}")


def test_c12_frozen_teacher(report, small_data):
    t = train_teacher(small_data, tiny_run(steps=5), TINY_MODEL)
    before = t.to_bytes()
    pretrain_student(small_data, t, tiny_pretrain(steps=10, batch_size=16))
    same = t.to_bytes() == before
    report(12, "frozen teacher", same, "teacher bytes unchanged" if same else "teacher bytes changed")
