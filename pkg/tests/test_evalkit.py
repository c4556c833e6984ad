"""Noise robustness, drift binning, drive-role traces, and fine-tuning."""

import json

import numpy as np
import pytest

from pulseforge.baselines import calibrate, drag_problem
from pulseforge.envs import ToyQuadraticEnv, TransmonGateEnv, preset_env_config
from pulseforge.evalkit import (
    DriftSpec,
    NoiseSpec,
    _control_fidelity,
    drift_sweep,
    finetune,
    noise_sweep,
    noisy_rollout,
    remove_drive,
    role_analysis,
)
from pulseforge.gates import rx, target_2q
from pulseforge.metrics import corrected_fidelity
from pulseforge.pulses import PulseGrid, PwcPulse
from pulseforge.qutrit import DT_NS, QUBIT_IDX_2Q, TwoTransmonSim
from pulseforge.rl import AgentConfig, DDPGAgent
from pulseforge.system import DriveChannel, PARAM_NAMES, SystemParams


def small_pulse(seed=0, segments=8, ticks=24, d1_scale=0.1):
    rng = np.random.default_rng(seed)
    grid = PulseGrid.from_ticks(ticks, segments)
    amps = {
        DriveChannel.U01: rng.uniform(-0.3, 0.3, segments)
        + 1j * rng.uniform(-0.3, 0.3, segments),
        DriveChannel.D1: d1_scale
        * (rng.uniform(-1, 1, segments) + 1j * rng.uniform(-1, 1, segments)),
    }
    return PwcPulse(grid, amps)


@pytest.fixture(scope="module")
def pi_pulse():
    # short calibrated pi rotation: a pulse at a local optimum, so parameter
    # noise can only hurt it on average
    prob = drag_problem(duration_ns=64 * DT_NS, target=rx(np.pi), transmon=0)
    res = calibrate(prob, budget=200, seed=0)
    assert res.fidelity > 0.999
    return res.pulse, np.kron(rx(np.pi), np.eye(2))


class TestNoise:
    def test_spec_validation(self):
        with pytest.raises(ValueError, match="sigma"):
            NoiseSpec(sigma=0.05)
        with pytest.raises(ValueError, match="sigma"):
            NoiseSpec(sigma=-0.01)
        with pytest.raises(ValueError, match="sample"):
            NoiseSpec(sigma=0.01, samples=0)

    def test_zero_sigma_is_exact_and_degenerate(self):
        pulse = small_pulse()
        target = target_2q("zx")
        res = noisy_rollout(pulse, target, NoiseSpec(0.0, 5), seed=9)
        sim = TwoTransmonSim(SystemParams.default(), tuple(pulse.amplitudes))
        direct = corrected_fidelity(sim.propagate(pulse).matrix, target)
        assert np.all(res.fidelities == direct)
        assert res.std == 0.0 and res.sem == 0.0

    def test_seed_reproducibility(self):
        pulse = small_pulse()
        target = target_2q("zx")
        a = noisy_rollout(pulse, target, NoiseSpec(0.02, 4), seed=5)
        b = noisy_rollout(pulse, target, NoiseSpec(0.02, 4), seed=5)
        c = noisy_rollout(pulse, target, NoiseSpec(0.02, 4), seed=6)
        assert np.array_equal(a.fidelities, b.fidelities)
        assert not np.array_equal(a.fidelities, c.fidelities)

    def test_sample_streams_are_order_independent(self):
        # sample k draws from its own stream, so a shorter run is a prefix
        pulse = small_pulse()
        target = target_2q("zx")
        few = noisy_rollout(pulse, target, NoiseSpec(0.02, 3), seed=5)
        many = noisy_rollout(pulse, target, NoiseSpec(0.02, 6), seed=5)
        assert np.array_equal(few.fidelities, many.fidelities[:3])

    def test_mean_fidelity_degrades_with_sigma(self, pi_pulse):
        pulse, target = pi_pulse
        results = noise_sweep(pulse, target, [0.0, 0.015, 0.03], samples=6, seed=11)
        assert [r.sigma for r in results] == [0.0, 0.015, 0.03]
        for lo, hi in zip(results[:-1], results[1:]):
            assert hi.mean <= lo.mean + 2 * (lo.sem + hi.sem)
        # 3% relative noise on a pi rotation is a visible, bounded hit
        assert results[-1].mean < results[0].mean
        assert results[-1].mean > 0.98


class TestDrift:
    def test_spec_validation(self):
        with pytest.raises(ValueError, match="kind"):
            DriftSpec(kind="flux")
        with pytest.raises(ValueError, match="bin_width"):
            DriftSpec(bin_width=0.0)
        with pytest.raises(ValueError, match="bin_width"):
            DriftSpec(bin_width=0.05, max_drift=0.04)
        with pytest.raises(ValueError, match="max_drift"):
            DriftSpec(max_drift=0.1)
        with pytest.raises(ValueError, match="ramp"):
            DriftSpec(samples_center=10, samples_edge=5)

    def test_quota_ramps_from_center_to_edge(self):
        spec = DriftSpec()
        assert spec.quota(0.0) == 15
        assert spec.quota(0.07) == 60 and spec.quota(-0.07) == 60
        qs = [spec.quota(c) for c in np.linspace(0, 0.07, 20)]
        assert all(b >= a for a, b in zip(qs, qs[1:]))

    def test_default_bin_grid(self):
        edges = DriftSpec().bin_edges()
        assert len(edges) == 71
        assert edges[0] == -0.07 and edges[-1] == 0.07
        assert np.allclose(np.diff(edges), 0.002)

    def test_pulse_sweep_bins_and_kind_slots(self, tmp_path):
        pulse = small_pulse(segments=4, ticks=8)
        spec = DriftSpec(
            kind="drive", bin_width=0.02, max_drift=0.04, samples_center=2, samples_edge=4
        )
        table = drift_sweep(pulse, spec, target=target_2q("zx"), seed=3)
        assert len(table.bins) == 4
        total = 0
        for b in table.bins:
            assert b.count == spec.quota(b.center)
            total += b.count
            fids = []
            for s in b.samples:
                signed = s.eps[np.argmax(np.abs(s.eps))]
                # lands in exactly this bin
                assert b.lo <= signed < b.hi
                assert s.max_abs_drift == pytest.approx(np.max(np.abs(s.eps)))
                # drive drift touches only the four drive slots
                assert np.all(s.eps[4:] == 0.0)
                assert 0.0 <= s.fidelity <= 1.0
                fids.append(s.fidelity)
            # published statistics recompute from the raw samples
            assert b.mean == pytest.approx(np.mean(fids))
            assert b.std == pytest.approx(np.std(fids))

        table_csv, raw_jsonl = table.save(tmp_path, stem="t")
        rows = table_csv.read_text().strip().splitlines()
        assert rows[0] == "bin_center,mean_fidelity,std_fidelity,count"
        assert len(rows) == 1 + len(table.bins)
        raws = [json.loads(line) for line in raw_jsonl.read_text().splitlines()]
        assert len(raws) == total
        assert all(len(r["eps"]) == len(PARAM_NAMES) for r in raws)

    def test_coupling_kind_moves_only_the_coupling(self):
        pulse = small_pulse(segments=2, ticks=4)
        spec = DriftSpec(
            kind="coupling", bin_width=0.04, max_drift=0.04, samples_center=1, samples_edge=2
        )
        table = drift_sweep(pulse, spec, target=target_2q("zx"), seed=0)
        for b in table.bins:
            for s in b.samples:
                assert np.all(s.eps[:8] == 0.0) and s.eps[8] != 0.0

    def test_sweep_reproducible(self):
        pulse = small_pulse(segments=2, ticks=4)
        spec = DriftSpec(
            kind="all", bin_width=0.04, max_drift=0.04, samples_center=1, samples_edge=1
        )
        t1 = drift_sweep(pulse, spec, target=target_2q("zx"), seed=7)
        t2 = drift_sweep(pulse, spec, target=target_2q("zx"), seed=7)
        assert np.array_equal(t1.means(), t2.means())

    def test_pulse_sweep_requires_target(self):
        with pytest.raises(ValueError, match="target"):
            drift_sweep(small_pulse(), DriftSpec())

    def test_unknown_source_rejected(self):
        with pytest.raises(TypeError, match="source"):
            drift_sweep(42, DriftSpec())

    def test_agent_sweep_runs_and_pins_drift(self):
        config = preset_env_config("ix", grid=PulseGrid.from_ticks(18, 6))
        agent = DDPGAgent(
            AgentConfig(state_dim=config.state_dim, action_dim=config.action_dim,
                        hidden=(8, 8)),
            action_scale=config.action_windows(),
            seed=1,
        )
        spec = DriftSpec(
            kind="detuning", bin_width=0.04, max_drift=0.04, samples_center=1, samples_edge=2
        )
        table = drift_sweep(agent, spec, config=config, seed=2)
        for b in table.bins:
            for s in b.samples:
                assert 0.0 <= s.fidelity <= 1.0
                assert np.all(s.eps[:4] == 0.0) and np.all(s.eps[6:] == 0.0)

    def test_agent_sweep_needs_config(self):
        agent = DDPGAgent(AgentConfig(state_dim=4, action_dim=2, hidden=(4,)), seed=0)
        with pytest.raises(ValueError, match="config"):
            drift_sweep(agent, DriftSpec())

    def test_agent_state_dim_mismatch_is_loud(self):
        # trained without the context vector, evaluated on an env that emits it
        plain = preset_env_config("ix", grid=PulseGrid.from_ticks(18, 6))
        ctx = preset_env_config("zx-drift", grid=PulseGrid.from_ticks(18, 6))
        agent = DDPGAgent(
            AgentConfig(state_dim=plain.state_dim, action_dim=plain.action_dim,
                        hidden=(8, 8)),
            seed=0,
        )
        with pytest.raises(ValueError, match="context"):
            drift_sweep(agent, DriftSpec(), config=ctx)


def uhlmann_reference(rho, sigma):
    w, v = np.linalg.eigh(rho)
    sq = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T
    ew = np.linalg.eigvalsh(sq @ sigma @ sq)
    return float(np.sum(np.sqrt(np.clip(ew, 0.0, None))) ** 2)


class TestRoles:
    def test_remove_drive_idempotent(self):
        pulse = small_pulse()
        once = remove_drive(pulse, DriveChannel.D1)
        twice = remove_drive(once, DriveChannel.D1)
        assert DriveChannel.D1 not in once.amplitudes
        assert set(once.amplitudes) == set(twice.amplitudes)
        assert np.array_equal(
            once.amplitudes[DriveChannel.U01], twice.amplitudes[DriveChannel.U01]
        )
        # the original is untouched
        assert DriveChannel.D1 in pulse.amplitudes

    def test_closed_form_matches_eigendecomposition(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            psi = rng.normal(size=4) + 1j * rng.normal(size=4)
            phi = rng.normal(size=4) + 1j * rng.normal(size=4)
            psi /= np.linalg.norm(psi)
            phi /= np.linalg.norm(phi)
            rho = np.outer(psi, psi.conj()).reshape(2, 2, 2, 2).trace(axis1=1, axis2=3)
            sig = np.outer(phi, phi.conj()).reshape(2, 2, 2, 2).trace(axis1=1, axis2=3)
            closed = float(np.trace(rho @ sig).real) + 2.0 * np.sqrt(
                max(float((np.linalg.det(rho) * np.linalg.det(sig)).real), 0.0)
            )
            assert closed == pytest.approx(uhlmann_reference(rho, sig), rel=1e-10)

    def test_control_fidelity_endpoints(self):
        zx = target_2q("zx")
        u9 = np.eye(9, dtype=complex)
        u9[np.ix_(QUBIT_IDX_2Q, QUBIT_IDX_2Q)] = zx
        assert _control_fidelity(u9, zx) == pytest.approx(1.0, abs=1e-12)
        # a control flip scores zero against a control-preserving target
        perm = np.eye(9, dtype=complex)
        perm[[0, 3]] = perm[[3, 0]]
        assert _control_fidelity(perm, zx) == pytest.approx(0.0, abs=1e-12)

    def test_traces_with_silent_d1_coincide_exactly(self):
        pulse = small_pulse(d1_scale=0.0)
        ra = role_analysis(pulse, target_2q("zx"))
        assert ra.max_entropy_deviation == 0.0
        assert ra.max_control_deviation == 0.0

    def test_active_d1_changes_the_traces(self):
        ra = role_analysis(small_pulse(d1_scale=0.3), target_2q("zx"))
        assert ra.max_entropy_deviation > 0.0
        assert ra.max_control_deviation > 0.0

    def test_trace_shapes_and_time_axis(self):
        pulse = small_pulse(segments=8, ticks=24)
        ra = role_analysis(pulse, target_2q("zx"))
        assert ra.times_ns.shape == (25,)
        assert ra.times_ns[0] == 0.0
        assert ra.times_ns[-1] == pytest.approx(24 * DT_NS)
        assert ra.s_lin_full.shape == ra.control_fidelity_full.shape == (25,)
        assert ra.s_lin_full[0] == pytest.approx(0.0, abs=1e-12)
        strided = role_analysis(pulse, target_2q("zx"), stride=2)
        assert strided.times_ns.shape == (13,)
        assert np.array_equal(strided.s_lin_full, ra.s_lin_full[::2])

    def test_requires_both_channels(self):
        grid = PulseGrid.from_ticks(8, 4)
        only_u = PwcPulse(grid, {DriveChannel.U01: np.full(4, 0.1 + 0j)})
        with pytest.raises(ValueError, match="d1"):
            role_analysis(only_u, target_2q("zx"))
        with pytest.raises(ValueError, match="stride"):
            role_analysis(small_pulse(), target_2q("zx"), stride=0)


class TestFinetune:
    def toy_agent(self, state_dim=2, seed=0):
        return DDPGAgent(
            AgentConfig(
                state_dim=state_dim,
                action_dim=1,
                hidden=(16, 16),
                lr=1e-3,
                warmup=0,
                capacity=5000,
            ),
            seed=seed,
        )

    def test_reports_episode_threshold_was_reached(self, tmp_path):
        env = ToyQuadraticEnv(seed=3)
        result = finetune(
            self.toy_agent(), env, threshold=0.0, window=20, max_episodes=200,
            out_dir=tmp_path,
        )
        assert result.reached
        assert result.episodes_to_threshold == 20
        assert len(result.history["score"]) == 20
        assert (tmp_path / "learning_curve.csv").exists()

    def test_unreachable_threshold_returns_none(self):
        env = ToyQuadraticEnv(seed=3)
        result = finetune(
            self.toy_agent(), env, threshold=2.0, window=10, max_episodes=35
        )
        assert not result.reached
        assert result.episodes_to_threshold is None
        assert len(result.history["score"]) == 35

    def test_state_dim_mismatch_rejected(self):
        env = ToyQuadraticEnv(seed=0)
        with pytest.raises(ValueError, match="state dim"):
            finetune(self.toy_agent(state_dim=3), env)

    def test_works_on_gate_env(self):
        config = preset_env_config("ix", grid=PulseGrid.from_ticks(12, 4))
        env = TransmonGateEnv(config, seed=0)
        agent = DDPGAgent(
            AgentConfig(state_dim=config.state_dim, action_dim=config.action_dim,
                        hidden=(8, 8), warmup=0, capacity=500),
            action_scale=config.action_windows(),
            seed=0,
        )
        result = finetune(agent, env, threshold=0.0, window=3, max_episodes=6)
        assert result.reached and result.episodes_to_threshold == 3
