import numpy as np
import pytest
import torch

from conftest import TINY_MODEL, TINY_SIM, tiny_run
from navdistill.config import ModelConfig, SimConfig
from navdistill.data import build_samples
from navdistill.encoders import fuse_state
from navdistill.errors import ConfigError, ContractError
from navdistill.simworld import generate_episode, ScenarioKind
from navdistill.teacher import (
    TeacherModel,
    assemble_teacher_sequence,
    teacher_forward,
    teacher_from_checkpoint,
    teacher_loss,
    train_teacher,
)

D = TINY_MODEL.d_model


@pytest.fixture
def model():
    torch.manual_seed(0)
    return TeacherModel(TINY_MODEL, TINY_SIM).eval()


def _states(m, n=5):
    return [torch.randn(D) for _ in range(n)]


def test_sequence_layout(model):
    seq = assemble_teacher_sequence(_states(model), torch.randn(D), model)
    assert seq.shape == (8, D)


def test_empty_or_wrong_state_count(model):
    with pytest.raises(ContractError):
        assemble_teacher_sequence([], torch.randn(D), model)
    with pytest.raises(ContractError):
        assemble_teacher_sequence(_states(model, 4), torch.randn(D), model)


def test_zero_positional_leaves_reg_first(model):
    with torch.no_grad():
        model.pos.zero_()
    states, text = _states(model), torch.randn(D)
    seq = assemble_teacher_sequence(states, text, model)
    assert torch.equal(seq[0], model.reg.detach())
    assert torch.equal(seq[6], text)
    assert torch.equal(seq[7], model.ctx.detach())


def test_forward_shapes_and_determinism(model):
    seq = assemble_teacher_sequence(_states(model), torch.randn(D), model)
    traj, ctx = teacher_forward(seq, model)
    assert traj.shape == (5, 2) and ctx.shape == (D,)
    traj2, ctx2 = teacher_forward(seq, model)
    assert torch.equal(traj, traj2) and torch.equal(ctx, ctx2)


def test_full_size_widths():
    m = TeacherModel(ModelConfig(), SimConfig())
    seq = torch.randn(8, 256)
    traj, ctx = teacher_forward(seq, m)
    assert traj.shape == (5, 2) and ctx.shape == (256,)
    assert len(m.transformer.blocks) == 6 and m.transformer.blocks[0].attn.num_heads == 8


def test_state_permutation_changes_output(model):
    states, text = _states(model), torch.randn(D)
    a = teacher_forward(assemble_teacher_sequence(states, text, model), model)[0]
    b = teacher_forward(assemble_teacher_sequence(states[::-1], text, model), model)[0]
    assert not torch.allclose(a, b)


def test_attention_is_bidirectional(model):
    seq = assemble_teacher_sequence(_states(model), torch.randn(D), model)
    _, _, maps = model.run(seq.unsqueeze(0), return_attention=True)
    # the first token attends to later ones
    assert (maps[0][0, 0, 1:] > 0).all()


def test_fusion_tokens_match_functional_form(model):
    ep = generate_episode(ScenarioKind.CROWD, 0, TINY_SIM)
    s = build_samples([ep], 5, 5, distill_only=True)
    b = s.batch([3])
    states = model.states(b["teacher_frames"], b["labels"])[0]
    i_emb = model.vision(b["teacher_frames"][0, 2:3])[0]
    a_emb = model.waypoint(b["labels"][0, 2])
    assert torch.allclose(states[2], fuse_state(a_emb, i_emb, model.fusion), atol=1e-6)


def _rel_err(a, n):
    return (a - n).norm() / max(n.norm(), 1e-12)


def test_mse_gradients_match_finite_differences():
    torch.manual_seed(0)
    sim = SimConfig(image_height=16, image_width=16)
    cfg = ModelConfig(d_model=16, layers=2, heads=2, conv_channels=(2, 3, 3, 3), decoder_hidden=16)
    m = TeacherModel(cfg, sim).double()
    g = torch.Generator().manual_seed(1)
    frames = torch.rand(2, 5, 16, 16, 3, generator=g, dtype=torch.float64)
    wp = torch.randn(2, 5, 2, generator=g, dtype=torch.float64)
    text = torch.tensor([[1, 5, 9], [2, -1, -1]])
    batch = {"teacher_frames": frames, "labels": wp, "text": text}
    loss = teacher_loss(m, batch)
    m.zero_grad()
    loss.backward()
    rng = np.random.default_rng(0)
    eps = 1e-6
    for name, p in m.named_parameters():
        if p.grad is None:  # the action mask token is unused without dropout
            continue
        flat = p.data.view(-1)
        idx = rng.choice(flat.numel(), size=min(6, flat.numel()), replace=False)
        numeric, analytic = [], []
        for i in idx:
            old = flat[i].item()
            flat[i] = old + eps
            up = teacher_loss(m, batch).item()
            flat[i] = old - eps
            down = teacher_loss(m, batch).item()
            flat[i] = old
            numeric.append((up - down) / (2 * eps))
            analytic.append(p.grad.view(-1)[i].item())
        n, a = torch.tensor(numeric), torch.tensor(analytic)
        if n.norm() > 1e-8:
            assert _rel_err(a, n) < 1e-3, name


def test_training_improves_validation(tiny_teacher):
    hist = tiny_teacher.meta["metrics"]["val_history"]
    assert min(hist[1:]) <= hist[0]
    assert tiny_teacher.stage == "teacher"


def test_training_is_seeded(tiny_data):
    a = train_teacher(tiny_data, tiny_run(epochs=1), TINY_MODEL)
    b = train_teacher(tiny_data, tiny_run(epochs=1), TINY_MODEL)
    assert a.to_bytes() == b.to_bytes()
    assert abs(a.meta["metrics"]["train_loss"] - b.meta["metrics"]["train_loss"]) < 1e-6


def test_teacher_memorizes_more_than_it_generalizes(tiny_data):
    ck = train_teacher(tiny_data, tiny_run(steps=600, max_train_samples=16, batch_size=16), TINY_MODEL)
    assert ck.meta["metrics"]["train_loss"] < ck.meta["metrics"]["val_loss"]


def test_empty_training_data_rejected():
    with pytest.raises(ConfigError):
        train_teacher([], tiny_run(), TINY_MODEL, TINY_SIM)


def test_checkpoint_rebuilds_same_model(tiny_teacher, tiny_data):
    m = teacher_from_checkpoint(tiny_teacher)
    s = build_samples(tiny_data.load_split("val"), 5, 5, distill_only=True)
    b = s.batch(np.arange(8))
    with torch.no_grad():
        out1 = m(b["teacher_frames"], b["labels"], b["text"])[0]
        out2 = teacher_from_checkpoint(tiny_teacher)(b["teacher_frames"], b["labels"], b["text"])[0]
    assert torch.equal(out1, out2)


def test_action_dropout_hides_waypoints(model):
    ep = generate_episode(ScenarioKind.CROWD, 0, TINY_SIM)
    b = build_samples([ep], 5, 5, distill_only=True).batch([0, 1])
    hide = torch.tensor([True, False])
    with torch.no_grad():
        a = model(b["teacher_frames"], b["labels"], b["text"], hide=hide)[0]
        moved = model(b["teacher_frames"], b["labels"] + 1.0, b["text"], hide=hide)[0]
    assert torch.equal(a[0], moved[0])
    assert not torch.equal(a[1], moved[1])
