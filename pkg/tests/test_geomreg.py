import numpy as np
import pytest
import torch

from facefill.geomreg import GeomRegressor, GeomRegressorConfig, parameter_checksum
from facefill.landmarks import LandmarkSet, dense_lm_loss, get_config
from facefill.morphable import FaceParams, reconstruct_mesh, reconstruct_vertices
from facefill.validation import InputError

from helpers import gradcheck_against_fd


@pytest.fixture
def regressor(toy_model):
    torch.manual_seed(0)
    return GeomRegressor(toy_model, GeomRegressorConfig(frame_size=32))


def _frame(rng, size=32):
    return rng.uniform(0, 1, (size, size, 3))


class TestParamRegression:
    def test_deterministic_with_frozen_weights(self, regressor, rng):
        frame = _frame(rng)
        a = regressor.regress_params(frame)
        b = regressor.regress_params(frame)
        assert torch.equal(a.vector(), b.vector())

    def test_output_dimensions(self, regressor, toy_model, rng):
        params = regressor.regress_params(_frame(rng))
        assert params.pose.shape == (3, 4)
        assert params.id_coeffs.shape == (toy_model.k_id,)
        assert params.exp_coeffs.shape == (toy_model.k_exp,)

    def test_zero_head_starts_at_identity_pose(self, regressor, rng):
        params = regressor.regress_params(_frame(rng))
        assert torch.equal(params.pose, torch.eye(3, 4, dtype=torch.float64))
        assert torch.all(params.id_coeffs == 0.0)

    def test_resolution_mismatch_rejected(self, regressor, rng):
        with pytest.raises(InputError):
            regressor.regress_params(_frame(rng, size=16))

    def test_finite_outputs(self, regressor, rng):
        vec = regressor.param_vectors(
            torch.tensor(rng.uniform(0, 1, (3, 3, 32, 32))))
        assert torch.isfinite(vec).all()

    def test_overfit_single_frame_reduces_landmark_error(self, toy_model,
                                                         tiny_dataset):
        torch.manual_seed(1)
        reg = GeomRegressor(toy_model, GeomRegressorConfig(frame_size=64))
        sample = tiny_dataset[0]
        frame = torch.tensor(sample.clip.frames[:1]).permute(0, 3, 1, 2)
        target = torch.tensor(sample.landmarks[0])
        optim = torch.optim.Adam(reg.parameters(), lr=2e-3)

        def landmark_error():
            out = reg.synergy_forward(frame)
            return dense_lm_loss(out["landmarks"][0], target)

        initial = float(landmark_error().detach())
        for _ in range(150):
            optim.zero_grad()
            loss = landmark_error()
            loss.backward()
            optim.step()
        final = float(landmark_error().detach())
        assert final <= 0.2 * initial


class TestRefinement:
    def test_identity_at_init(self, regressor, toy_model, rng):
        points = LandmarkSet(rng.uniform(0.1, 0.9, (478, 3)))
        params = FaceParams.identity(toy_model)
        refined = regressor.refine_landmarks(points, params)
        assert np.array_equal(refined.points, points.points)

    @pytest.mark.parametrize("count", [68, 216, 478])
    def test_cardinality_preserved(self, regressor, toy_model, rng, count):
        points = rng.uniform(0.1, 0.9, (count, 3))
        refined = regressor.refine_landmarks(points,
                                             FaceParams.identity(toy_model))
        assert refined.shape == (count, 3)

    def test_finite_after_weight_noise(self, regressor, toy_model, rng):
        with torch.no_grad():
            for p in regressor.refine_net.parameters():
                p.add_(torch.tensor(rng.normal(0, 0.1, p.shape)))
        refined = regressor.refine_landmarks(rng.uniform(0, 1, (68, 3)),
                                             FaceParams.identity(toy_model))
        assert np.isfinite(refined).all()


class TestFeedback:
    def test_shape_and_determinism(self, regressor, toy_model, rng):
        points = rng.uniform(0.1, 0.9, (216, 3))
        a = regressor.params_from_landmarks(points)
        b = regressor.params_from_landmarks(points)
        assert torch.equal(a.vector(), b.vector())
        assert a.vector().numel() == 12 + toy_model.k_id + toy_model.k_exp

    def test_landmark_identity_matters(self, regressor, rng):
        # landmark sets are ordered (correspondence by index), so the
        # feedback path keys each point by its slot identity
        points = torch.tensor(rng.uniform(0.1, 0.9, (68, 3)))
        a = regressor.feedback_params(points, torch.arange(68))
        b = regressor.feedback_params(points, torch.arange(100, 168))
        assert not torch.allclose(a, b, atol=1e-12)

    def test_feedback_inversion_improves_over_random(self, toy_model):
        """Train the landmark-to-coefficients path to invert the linear
        model; reconstruction from recovered coefficients must beat random
        coefficients on held-out draws."""
        torch.manual_seed(2)
        reg = GeomRegressor(toy_model, GeomRegressorConfig(frame_size=32))
        optim = torch.optim.Adam(list(reg.point_net.parameters())
                                 + list(reg.feedback_head.parameters()), lr=3e-3)
        pose = torch.eye(3, 4, dtype=torch.float64)
        zero_exp = torch.zeros(toy_model.k_exp, dtype=torch.float64)
        gen = torch.Generator().manual_seed(0)

        def landmarks_of(coeffs):
            verts = reconstruct_vertices(toy_model, pose, coeffs, zero_exp)
            return verts[torch.as_tensor(toy_model.landmark_indices)]

        draws = [0.05 * torch.randn(toy_model.k_id, generator=gen,
                                    dtype=torch.float64) for _ in range(32)]
        batch = [(landmarks_of(c).detach(),
                  torch.cat([pose.reshape(-1), c, zero_exp])) for c in draws]
        for _ in range(120):
            for points, target in batch:
                optim.zero_grad()
                predicted = reg.feedback_params(points)
                ((predicted - target) ** 2).mean().backward()
                optim.step()

        rms_fit, rms_rand = [], []
        for _ in range(8):
            coeffs = 0.05 * torch.randn(toy_model.k_id, generator=gen,
                                        dtype=torch.float64)
            truth = reconstruct_vertices(toy_model, pose, coeffs, zero_exp)
            recovered = reg.params_from_landmarks(
                landmarks_of(coeffs).detach().numpy())
            fitted = reconstruct_vertices(toy_model, recovered.pose,
                                          recovered.id_coeffs,
                                          recovered.exp_coeffs)
            random_params = FaceParams(
                pose, 0.05 * torch.randn(toy_model.k_id, generator=gen,
                                         dtype=torch.float64), zero_exp)
            rand = reconstruct_vertices(toy_model, random_params.pose,
                                        random_params.id_coeffs,
                                        random_params.exp_coeffs)
            rms_fit.append(float(((fitted - truth) ** 2).mean().sqrt()))
            rms_rand.append(float(((rand - truth) ** 2).mean().sqrt()))
        assert np.mean(rms_fit) < np.mean(rms_rand)


class TestComposition:
    def test_reconstruct_from_frame_matches_manual(self, regressor, toy_model,
                                                   rng):
        frame = _frame(rng)
        mesh = regressor.reconstruct_from_frame(frame)
        manual = reconstruct_mesh(toy_model, regressor.regress_params(frame))
        assert np.array_equal(mesh.vertices, manual.vertices)

    def test_mesh_vertex_count(self, regressor, toy_model, rng):
        mesh = regressor.reconstruct_from_frame(_frame(rng))
        assert mesh.vertex_count == toy_model.vertex_count

    def test_synergy_forward_shapes(self, regressor, toy_model, rng):
        frames = torch.tensor(rng.uniform(0, 1, (2, 3, 32, 32)))
        indices = get_config("standard68").index_list
        out = regressor.synergy_forward(frames, indices)
        assert len(out["params"]) == 2
        assert out["landmarks"][0].shape == (68, 3)
        assert out["feedback"][0].numel() == 12 + toy_model.k_id + toy_model.k_exp


class TestFreezing:
    def test_checksum_stable_under_frozen_backprop(self, regressor, rng):
        regressor.set_frozen(True)
        before = parameter_checksum(regressor)
        frames = torch.tensor(rng.uniform(0, 1, (1, 3, 32, 32)),
                              requires_grad=True)
        out = regressor.synergy_forward(frames)
        loss = out["landmarks"][0].sum()
        loss.backward()
        assert frames.grad is not None          # gradients still reach inputs
        assert parameter_checksum(regressor) == before

    def test_checksum_changes_after_update(self, regressor, rng):
        regressor.set_frozen(False)
        before = parameter_checksum(regressor)
        optim = torch.optim.Adam(regressor.parameters(), lr=1e-3)
        frames = torch.tensor(rng.uniform(0, 1, (1, 3, 32, 32)))
        loss = regressor.synergy_forward(frames)["landmarks"][0].sum()
        optim.zero_grad()
        loss.backward()
        optim.step()
        assert parameter_checksum(regressor) != before

    def test_gradient_spot_check(self, regressor, rng):
        """Finite differences on 3 random backbone parameters through the
        full synergy path."""
        frames = torch.tensor(rng.uniform(0, 1, (1, 3, 32, 32)))
        weight = regressor.head.weight

        def fn():
            out = regressor.synergy_forward(frames)
            return out["landmarks"][0].sum() + out["feedback"][0].sum()

        rel = gradcheck_against_fd(fn, weight, n_probe=3, eps=1e-6)
        assert rel < 1e-3
