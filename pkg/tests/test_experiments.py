import json

import numpy as np
import pytest

from osclat import dynamics as dyn
from osclat import experiments as exp
from osclat import lattice as lat
from osclat import observables as obs
from osclat.model import PhaseState, homogeneous_model

F2 = lat.power_decay(2.0)


def chain_model(n=8, coupling=0.8, r_cut=2.0):
    return homogeneous_model(
        lat.chain(n), 1, mass=1.0, force_constant=1.0, decay=F2,
        family="bump", coupling=coupling, radius=1.5, r_cut=r_cut,
    )


SMALL = obs.SamplerSpec(n_points=16, radius=4.0, seed=11, refine_evals=0)


class TestEnvelopeCheck:
    def test_interaction_free_off_diagonal_zero(self):
        model = chain_model(coupling=0.0)
        rep = exp.run_envelope_check(model, model.lattice.sites, [(1, 5), (0, 3)],
                                     1.0, 4, SMALL)
        assert rep.passed
        np.testing.assert_array_equal(rep.measured, 0.0)

    def test_zero_time_zero_margin(self):
        model = chain_model()
        rep = exp.run_envelope_check(model, model.lattice.sites, [(1, 5)], 1.0, 4, SMALL)
        assert rep.measured[0, :, 0] == pytest.approx(0.0)
        assert rep.envelope[0, :, 0] == pytest.approx(0.0)

    def test_default_chain_dominated(self):
        model = chain_model()
        rep = exp.run_envelope_check(model, model.lattice.sites,
                                     [(1, 5), (0, 3), (2, 6)], 2.0, 8,
                                     obs.SamplerSpec(n_points=32, radius=5.0, seed=3, refine_evals=0),
                                     workers=2)
        assert rep.passed
        assert rep.violations == 0

    def test_rejects_diagonal_pair(self):
        model = chain_model()
        with pytest.raises(exp.ExperimentError):
            exp.run_envelope_check(model, model.lattice.sites, [(2, 2)], 1.0, 4, SMALL)


class TestLRExperiment:
    def test_zero_time_lhs_exactly_zero(self):
        model = chain_model()
        f = obs.gaussian_levee((1,), 1, width=1.0)
        g = obs.gaussian_levee((5,), 1, width=1.0)
        rep = exp.run_lr_experiment(model, model.lattice.sites, f, g, 1.0, 5, SMALL)
        mid = len(rep.times) // 2
        assert rep.times[mid] == 0.0
        assert rep.lhs[mid] == 0.0

    def test_interaction_free_no_propagation(self):
        model = chain_model(coupling=0.0)
        f = obs.gaussian_levee((1,), 1, width=1.0)
        g = obs.gaussian_levee((5,), 1, width=1.0)
        rep = exp.run_lr_experiment(model, model.lattice.sites, f, g, 2.0, 5, SMALL)
        np.testing.assert_array_equal(rep.lhs, 0.0)
        nonzero = rep.times != 0.0
        assert np.all(rep.rhs_sinh[nonzero] > 0.0)
        assert rep.passed

    def test_default_chain_passes_with_positive_margin(self):
        model = chain_model()
        f = obs.gaussian_levee((1,), 1, width=1.0)
        g = obs.gaussian_levee((5,), 1, width=1.0)
        rep = exp.run_lr_experiment(
            model, model.lattice.sites, f, g, 2.0, 9,
            obs.SamplerSpec(n_points=32, radius=5.0, seed=5, refine_evals=20), workers=2,
        )
        assert rep.passed
        nonzero = rep.times != 0.0
        assert np.all(rep.margins[nonzero] > 0.0)
        assert np.max(rep.lhs) > 0.0

    def test_overlapping_supports_rejected(self):
        model = chain_model()
        f = obs.gaussian_levee((1, 2), 1, width=1.0)
        g = obs.gaussian_levee((2, 3), 1, width=1.0)
        with pytest.raises(exp.ExperimentError, match="disjoint"):
            exp.run_lr_experiment(model, model.lattice.sites, f, g, 1.0, 5, SMALL)

    def test_onset_monotone_in_distance(self):
        model = chain_model()
        f = obs.gaussian_levee((1,), 1, width=1.0)
        onsets = []
        for y in (3, 5, 7):
            g = obs.gaussian_levee((y,), 1, width=1.0)
            rep = exp.run_lr_experiment(
                model, model.lattice.sites, f, g, 3.0, 31,
                obs.SamplerSpec(n_points=16, radius=5.0, seed=7, refine_evals=0),
                workers=2,
            )
            onsets.append(rep.onset)
        assert onsets == sorted(onsets)

    def test_swap_consistency_via_flow_transport(self):
        """{evolved f, g}(s) must equal -{evolved g, f}(-t) at the evolved point."""
        model = chain_model()
        f = obs.gaussian_levee((1,), 1, width=1.0)
        g = obs.gaussian_levee((5,), 1, width=0.8)
        rng = np.random.default_rng(13)
        s0 = PhaseState(model.lattice.sites,
                        rng.normal(scale=0.4, size=(8, 1)),
                        rng.normal(scale=0.4, size=(8, 1)))
        t = 1.1
        forward = obs.evolved_bracket(model, f, g, t, s0)
        moved = dyn.integrate_flow(model, s0, t, h=1e-3).final_state
        transported = -obs.evolved_bracket(model, g, f, -t, moved)
        assert forward == pytest.approx(transported, rel=1e-3)

    def test_lhs_scale_hook_fails_report(self):
        model = chain_model()
        f = obs.gaussian_levee((1,), 1, width=1.0)
        g = obs.gaussian_levee((5,), 1, width=1.0)
        rep = exp.run_lr_experiment(model, model.lattice.sites, f, g, 2.0, 5,
                                    SMALL, lhs_scale=1e12)
        assert not rep.passed
        assert not rep.lhs_is_lower_bound

    def test_report_roundtrips_to_json(self):
        model = chain_model()
        f = obs.gaussian_levee((1,), 1, width=1.0)
        g = obs.gaussian_levee((5,), 1, width=1.0)
        rep = exp.run_lr_experiment(model, model.lattice.sites, f, g, 1.0, 5, SMALL)
        text = json.dumps(rep.as_dict(), sort_keys=True)
        back = json.loads(text)
        assert back["verdict"] == "pass"
        assert back["lhs"][len(back["lhs"]) // 2] == 0.0


class TestConvergence:
    def volumes(self, chain, radii=(2, 4, 8, 16)):
        return [lat.ball(chain, 0, r) for r in radii]

    def test_interaction_free_differences_vanish(self):
        chain = lat.chain(17)
        model = homogeneous_model(chain, 1, 1.0, 1.0, F2)
        f = obs.gaussian_levee((0,), 1, width=1.0)
        rep = exp.run_convergence_experiment(model, self.volumes(chain), f, 1.0, 5, SMALL)
        np.testing.assert_array_equal(rep.diffs, 0.0)
        assert rep.passed

    def test_zero_time_column_is_zero(self):
        chain = lat.chain(17)
        model = homogeneous_model(chain, 1, 1.0, 1.0, F2, family="bump",
                                  coupling=2.0, radius=1.5, r_cut=2.0)
        f = obs.gaussian_levee((0,), 1, width=1.0)
        rep = exp.run_convergence_experiment(model, self.volumes(chain), f, 1.0, 5, SMALL)
        mid = len(rep.times) // 2
        assert rep.times[mid] == 0.0
        np.testing.assert_array_equal(rep.diffs[:, mid], 0.0)

    def test_coupled_chain_decreasing_below_bound(self):
        chain = lat.chain(17)
        model = homogeneous_model(chain, 1, 1.0, 1.0, F2, family="bump",
                                  coupling=2.0, radius=1.5, r_cut=2.0)
        f = obs.gaussian_levee((0,), 1, width=1.0)
        rep = exp.run_convergence_experiment(
            model, self.volumes(chain), f, 1.0, 5,
            obs.SamplerSpec(n_points=16, radius=3.0, seed=3, refine_evals=0), workers=2,
        )
        assert rep.strictly_decreasing
        assert rep.below_bound
        assert rep.passed

    def test_truncated_interactions_strictly_local_at_short_times(self):
        """Far shell, short horizon: differences at stepping resolution only."""
        chain = lat.chain(17)
        model = homogeneous_model(chain, 1, 1.0, 1.0, F2, family="bump",
                                  coupling=0.8, radius=1.5, r_cut=2.0)
        f = obs.gaussian_levee((0,), 1, width=1.0)
        vols = [lat.ball(chain, 0, 8), lat.ball(chain, 0, 16)]
        assert lat.set_distance(chain, f.support, tuple(set(vols[1]) - set(vols[0]))) > 4 * 2.0
        rep = exp.run_convergence_experiment(model, vols, f, 0.1, 3, SMALL)
        assert np.max(rep.diffs) <= 1e-9

    def test_rejects_non_nested(self):
        chain = lat.chain(17)
        model = homogeneous_model(chain, 1, 1.0, 1.0, F2)
        f = obs.gaussian_levee((0,), 1, width=1.0)
        with pytest.raises(exp.ExperimentError):
            exp.run_convergence_experiment(model, [(0, 1, 2), (1, 2, 3)], f, 1.0, 3, SMALL)

    def test_rejects_support_outside_smallest(self):
        chain = lat.chain(17)
        model = homogeneous_model(chain, 1, 1.0, 1.0, F2)
        f = obs.gaussian_levee((5,), 1, width=1.0)
        with pytest.raises(exp.ExperimentError):
            exp.run_convergence_experiment(model, self.volumes(chain, (2, 4)), f, 1.0, 3, SMALL)


class TestReconstruction:
    def test_zero_time_identity(self):
        model = chain_model()
        f = obs.gaussian_levee((1,), 1, width=1.0)
        rep = exp.run_interaction_picture_check(model, model.lattice.sites, f, (0.0,), SMALL)
        assert rep.discrepancy[0] == 0.0

    def test_interaction_free_gamma_is_identity(self):
        model = chain_model(coupling=0.0)
        f = obs.gaussian_levee((1,), 1, width=1.0)
        rep = exp.run_interaction_picture_check(model, model.lattice.sites, f, (0.5, 1.0), SMALL)
        assert np.max(rep.gamma_vs_identity) <= 1e-8
        assert rep.passed

    def test_default_chain_small_discrepancy(self):
        model = chain_model()
        f = obs.gaussian_levee((1,), 1, width=1.0)
        rep = exp.run_interaction_picture_check(
            model, model.lattice.sites, f, (0.5, 1.0),
            obs.SamplerSpec(n_points=32, radius=5.0, seed=9, refine_evals=0), workers=2,
        )
        assert rep.passed
        assert np.max(rep.discrepancy) <= 1e-6


class TestDeterminism:
    def test_workers_do_not_change_results(self):
        model = chain_model()
        f = obs.gaussian_levee((1,), 1, width=1.0)
        g = obs.gaussian_levee((5,), 1, width=1.0)
        spec = obs.SamplerSpec(n_points=16, radius=5.0, seed=21, refine_evals=10)
        a = exp.run_lr_experiment(model, model.lattice.sites, f, g, 1.0, 5, spec, workers=1)
        b = exp.run_lr_experiment(model, model.lattice.sites, f, g, 1.0, 5, spec, workers=4)
        assert json.dumps(a.as_dict(), sort_keys=True) == json.dumps(b.as_dict(), sort_keys=True)

    def test_repeat_runs_identical(self):
        model = chain_model()
        f = obs.gaussian_levee((1,), 1, width=1.0)
        g = obs.gaussian_levee((5,), 1, width=1.0)
        spec = obs.SamplerSpec(n_points=16, radius=5.0, seed=22, refine_evals=10)
        runs = [
            exp.run_lr_experiment(model, model.lattice.sites, f, g, 1.0, 5, spec)
            for _ in range(2)
        ]
        assert json.dumps(runs[0].as_dict(), sort_keys=True) == json.dumps(runs[1].as_dict(), sort_keys=True)
