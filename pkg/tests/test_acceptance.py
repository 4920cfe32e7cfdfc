"""Acceptance criteria, one test per criterion at its stated tolerance.

Run with `pytest tests/test_acceptance.py -v -s` to see one pass/fail line
per criterion. Wall-clock limits are generous sanity bounds for laptop-class
CPUs, not performance claims; absolute millisecond timings from GPU-backed
reports are out of scope.
"""

import math
import time

import numpy as np
import pytest

from kinoptik import collision as col
from kinoptik import costs as ck
from kinoptik import solver as sv
from kinoptik.benchmark import (
    BenchmarkSpec,
    _blocked_scene,
    run_ik_benchmark,
    run_mobile_benchmark,
)
from kinoptik.liegroups import Rotation3, Transform2, Transform3, interpolate
from kinoptik.robot import link_transform
from kinoptik.solver import CostTerm, Problem, SolveOptions, VariableSet
from kinoptik.tasks import TrajRequest, plan_trajectory, trajectory_signed_distances

from conftest import robot_path


def report(name: str, ok: bool, detail: str = ""):
    line = f"[{'PASS' if ok else 'FAIL'}] {name}"
    if detail:
        line += f"  ({detail})"
    print(line, flush=True)
    assert ok, line


class TestMobileBaseIkReproduction:
    def test_criterion(self, arm7):
        spec = BenchmarkSpec(
            urdf=robot_path("arm7.urdf"),
            sidecar=robot_path("arm7.sidecar.json"),
            task="ik_mobile",
            num_targets=100,
            rng_seed=2024,
            target_link="flange",
            translation_radius=2.0,
        )
        start = time.perf_counter()
        result = run_mobile_benchmark(spec, model=arm7)
        elapsed = time.perf_counter() - start
        opt = result["results"]["optimized"]
        static = result["results"]["static"]
        ok = (
            opt["success_rate"] >= 0.99
            and opt["pos_mean"] < 1e-4
            and opt["rot_mean"] < 1e-3
            and static["success_rate"] <= 0.60
            and elapsed < 60.0
        )
        report(
            "mobile-base IK reproduction",
            ok,
            f"optimized {100 * opt['success_rate']:.0f}% pos {opt['pos_mean']:.2e} m "
            f"rot {opt['rot_mean']:.2e} rad, static {100 * static['success_rate']:.0f}%, "
            f"{elapsed:.1f}s",
        )


class TestIkBeamSuccess:
    def test_criterion(self, arm7):
        spec = BenchmarkSpec(
            urdf=robot_path("arm7.urdf"),
            sidecar=robot_path("arm7.sidecar.json"),
            task="ik",
            num_targets=1000,
            rng_seed=77,
            target_link="flange",
            batch_sizes=[1000],
        )
        start = time.perf_counter()
        result = run_ik_benchmark(spec, model=arm7)
        elapsed = time.perf_counter() - start
        row = result["results"]["per_batch_size"]["1000"]
        ok = row["success_rate"] >= 0.995 and row["pos_p98"] < 1e-3 and elapsed < 300.0
        report(
            "IK-Beam success (1000 reachable targets)",
            ok,
            f"success {100 * row['success_rate']:.2f}%, p98 pos {row['pos_p98']:.2e} m, "
            f"{elapsed:.0f}s single-threaded",
        )


class TestTrajectoryOptimization:
    def test_criterion(self, arm7):
        feasible = 0
        endpoint_ok = 0
        monotone = 0
        scenes = 10
        for i in range(scenes):
            pa, pb, world = _blocked_scene(arm7, "flange", 3000, i)
            res = plan_trajectory(
                TrajRequest(
                    model=arm7, start_pose=pa, goal_pose=pb, timesteps=20, dt=0.1,
                    world=world, rng_seed=3000 + i, target_link="flange",
                )
            )
            static, swept = trajectory_signed_distances(arm7, res.qs, world)
            feasible += static.min() >= 0.0 and swept.min() >= 0.0
            endpoint_ok += (
                max(res.start_pos_error, res.goal_pos_error) < 0.005
                and max(res.start_rot_error, res.goal_rot_error) < 0.05
            )
            hist = res.report.cost_history
            monotone += all(b <= a + 1e-15 for a, b in zip(hist, hist[1:]))
        ok = feasible == scenes and endpoint_ok == scenes and monotone == scenes
        report(
            "trajectory optimization around blocking obstacle",
            ok,
            f"{feasible}/{scenes} collision-free, {endpoint_ok}/{scenes} endpoints in "
            f"tolerance, {monotone}/{scenes} monotone",
        )


class TestJacobianOracleSuite:
    N_CONFIGS = 100
    TOL = 1e-5

    def _worlds(self):
        return {
            "arm7": col.WorldModel(
                [
                    col.Sphere([0.45, 0.1, 0.55], 0.12),
                    col.Capsule([-0.5, -0.4, 0.2], [-0.5, 0.4, 0.6], 0.1),
                    col.HalfSpace([0.0, 0.0, 1.0], -0.3),
                ]
            ),
            "planar_2r": col.WorldModel(
                [
                    col.Sphere([1.2, 0.8, 0.0], 0.25),
                    col.Capsule([0.0, -1.2, -0.3], [1.5, -1.2, 0.3], 0.2),
                ]
            ),
        }

    def _families(self, model, name, link, world):
        rng_clock = [0]

        fams = {
            "pose": ck.pose_cost(
                model, "q", link, link_transform(model, model.rest_pose, link)
            ),
            "pose+base": ck.pose_cost(
                model, "q", link,
                link_transform(model, model.rest_pose, link), base_var="base",
            ),
            "limit": ck.limit_cost(model, "q"),
            "velocity": ck.velocity_limit_cost(model, "a", "b", dt=0.1),
            "rest": ck.rest_cost("q", model.rest_pose),
            "smoothness": ck.smoothness_cost(model, "a", "b"),
            "acceleration": ck.acceleration_cost(model, list("abcde"), dt=0.08),
            "jerk": ck.jerk_cost(model, list("abcde"), dt=0.08),
            "manipulability": ck.manipulability_cost(model, "q", link),
            "world_collision": ck.world_collision_cost(model, "q", world, eta=0.08),
            "self_collision": ck.self_collision_cost(model, "q", eta=0.05),
            "swept_collision": ck.swept_collision_cost(model, "a", "b", world, eta=0.08),
        }
        return fams

    def _draw_values(self, model, cost, family, rng):
        span = model.upper_limits - model.lower_limits
        values = []
        for _ in cost.variable_refs:
            if family == "limit":
                # enlarged box so some limit rows activate
                values.append(
                    rng.uniform(model.lower_limits - 0.5 * span, model.upper_limits + 0.5 * span)
                )
            else:
                values.append(model.sample_configuration(rng))
        if family == "pose+base":
            values[-1] = Transform2(rng.uniform(-math.pi, math.pi), rng.normal(size=2))
        return values

    @pytest.mark.parametrize("fixture", ["planar_2r", "arm7"])
    def test_criterion(self, fixture, request):
        model = request.getfixturevalue(fixture)
        link = model.link_names[-1]
        world = self._worlds()[fixture]
        rng = np.random.default_rng(99)
        worst = {}
        for family, cost in self._families(model, fixture, link, world).items():
            worst[family] = 0.0
            done = 0
            while done < self.N_CONFIGS:
                values = self._draw_values(model, cost, family, rng)
                if family == "manipulability" and cost.evaluator(*values)[0] > 20.0:
                    continue  # finite differences are invalid that close to a singularity
                analytic = cost.jacobian(*values)
                numeric = sv.numeric_jacobian(cost, values)
                err = max(
                    float(np.max(np.abs(np.asarray(a) - n)))
                    for a, n in zip(analytic, numeric)
                )
                worst[family] = max(worst[family], err)
                done += 1
        bad = {k: v for k, v in worst.items() if v >= self.TOL}
        report(
            f"Jacobian oracle suite [{fixture}]",
            not bad,
            f"worst max-abs error {max(worst.values()):.2e} over "
            f"{self.N_CONFIGS} configs x {len(worst)} families",
        )


class TestSolverOracleSuite:
    def test_criterion(self):
        rng = np.random.default_rng(123)

        # linear least squares against the normal-equation oracle
        a = rng.normal(size=(9, 4))
        b = rng.normal(size=9)
        expected, *_ = np.linalg.lstsq(a, b, rcond=None)
        problem = Problem(
            VariableSet.of(x=np.zeros(4)),
            [
                CostTerm(
                    name="ls", residual_dim=9, variable_refs=["x"], weight=np.ones(9),
                    evaluator=lambda x: a @ x - b, jacobian=lambda x: [a],
                )
            ],
        )
        rep = sv.solve(problem, SolveOptions(max_iterations=10))
        linear_ok = (
            float(np.max(np.abs(rep.final_values.value("x") - expected))) < 1e-8
            and rep.iterations_run <= 3
        )

        # Rosenbrock in residual form
        rosen = CostTerm(
            name="rosenbrock", residual_dim=2, variable_refs=["p"], weight=np.ones(2),
            evaluator=lambda p: np.array([1.0 - p[0], 10.0 * (p[1] - p[0] ** 2)]),
        )
        rep = sv.solve(
            Problem(VariableSet.of(p=np.array([-1.2, 1.0])), [rosen]),
            SolveOptions(max_iterations=200),
        )
        rosen_ok = float(np.max(np.abs(rep.final_values.value("p") - 1.0))) < 1e-6

        # sparse vs dense step agreement on a T=10 trajectory problem
        variables = VariableSet()
        for t in range(10):
            variables.add(f"q{t}", rng.normal(size=3))
        costs = []
        for t in range(1, 10):
            costs.append(
                CostTerm(
                    name=f"s{t}", residual_dim=3, variable_refs=[f"q{t-1}", f"q{t}"],
                    weight=np.full(3, 2.0), evaluator=lambda p, c: c - p,
                    jacobian=lambda p, c: [-np.eye(3), np.eye(3)],
                )
            )
        costs.append(
            CostTerm(
                name="anchor", residual_dim=3, variable_refs=["q0"],
                weight=np.full(3, 10.0), evaluator=lambda q: q - 1.0,
                jacobian=lambda q: [np.eye(3)],
            )
        )
        tp = Problem(variables, costs)
        r, jac = sv.assemble(tp, variables)
        h_d, g_d, diag_d, _ = sv._normal_equation_parts(jac, r, "dense_cholesky")
        h_s, g_s, diag_s, _ = sv._normal_equation_parts(jac, r, "sparse_cholesky")
        sd = sv._damped_step(h_d, g_d, 1e-4, diag_d, sparse=False)
        ss = sv._damped_step(h_s, g_s, 1e-4, diag_s, sparse=True)
        sparse_ok = float(np.max(np.abs(sd - ss))) < 1e-9

        # bitwise batch determinism across worker counts
        def make(start):
            return Problem(
                VariableSet.of(p=np.asarray(start, dtype=float)),
                [
                    CostTerm(
                        name="rosenbrock", residual_dim=2, variable_refs=["p"],
                        weight=np.ones(2),
                        evaluator=lambda p: np.array([1.0 - p[0], 10.0 * (p[1] - p[0] ** 2)]),
                    )
                ],
            )

        starts = [rng.normal(size=2) * 2 for _ in range(16)]
        seq = sv.solve_batch([make(s) for s in starts], workers=1)
        par = sv.solve_batch([make(s) for s in starts], workers=4)
        batch_ok = all(
            np.array_equal(x.final_values.value("p"), y.final_values.value("p"))
            and x.cost_history == y.cost_history
            for x, y in zip(seq, par)
        )

        report(
            "solver oracle suite",
            linear_ok and rosen_ok and sparse_ok and batch_ok,
            f"linear {linear_ok}, rosenbrock {rosen_ok}, sparse/dense {sparse_ok}, "
            f"batch-determinism {batch_ok}",
        )


class TestLieGroupPropertySuite:
    def test_criterion(self):
        rng = np.random.default_rng(321)

        def rand_rotvec():
            v = rng.normal(size=3)
            return v / np.linalg.norm(v) * rng.uniform(0.0, math.pi - 1e-3)

        worst_round = 0.0
        for _ in range(1000):
            w = rand_rotvec()
            worst_round = max(worst_round, float(np.linalg.norm(Rotation3.exp(w).log() - w)))
            xi = np.concatenate([rng.normal(size=3), rand_rotvec()])
            worst_round = max(worst_round, float(np.max(np.abs(Transform3.exp(xi).log() - xi))))
            d2 = np.array([*rng.normal(size=2), rng.uniform(-math.pi + 1e-3, math.pi - 1e-3)])
            worst_round = max(worst_round, float(np.max(np.abs(Transform2.exp(d2).log() - d2))))
        round_ok = worst_round < 1e-8

        worst_assoc = 0.0
        worst_interp = 0.0
        for _ in range(200):
            ts = [
                Transform3(Rotation3.exp(rand_rotvec()), rng.normal(size=3)) for _ in range(3)
            ]
            lhs = ts[0].compose(ts[1]).compose(ts[2])
            rhs = ts[0].compose(ts[1].compose(ts[2]))
            worst_assoc = max(
                worst_assoc,
                float(np.linalg.norm(lhs.translation - rhs.translation)),
                lhs.rotation.angle_to(rhs.rotation),
            )
            alpha = rng.uniform(0.0, 1.0)
            fwd = interpolate(ts[0], ts[1], alpha)
            rev = interpolate(ts[1], ts[0], 1.0 - alpha)
            worst_interp = max(
                worst_interp,
                float(np.linalg.norm(fwd.translation - rev.translation)),
                fwd.rotation.angle_to(rev.rotation),
            )
        report(
            "Lie-group property suite",
            round_ok and worst_assoc < 1e-9 and worst_interp < 1e-9,
            f"roundtrip {worst_round:.2e}, associativity {worst_assoc:.2e}, "
            f"interpolation symmetry {worst_interp:.2e}",
        )


class TestCollisionSuite:
    def test_criterion(self):
        # activation values against the closed form at the named grid
        eta = 0.05
        grid_ok = True
        for d, expected in [
            (-0.1, 0.1 + 0.5 * eta),
            (0.0, 0.5 * eta),
            (eta / 2, (0.5 / eta) * (eta - eta / 2) ** 2),
            (eta, 0.0),
            (2 * eta, 0.0),
        ]:
            grid_ok &= abs(col.activation(d, eta) - expected) < 1e-12
        # the worked example: d = -0.1 at eta = 0.05 gives 0.125
        grid_ok &= abs(col.activation(-0.1, 0.05) - 0.125) < 1e-12

        # capsule-capsule vs the 10^4-sample oracle
        rng = np.random.default_rng(55)
        sampling_ok = True
        checked = 0
        while checked < 50:
            a = col.Capsule(rng.normal(size=3), rng.normal(size=3), rng.uniform(0.05, 0.3))
            b = col.Capsule(rng.normal(size=3), rng.normal(size=3), rng.uniform(0.05, 0.3))
            exact = col.signed_distance(a, b)
            ua = np.linspace(0, 1, 100)[:, None]
            pa = a.endpoint_a + ua * (a.endpoint_b - a.endpoint_a)
            pb = b.endpoint_a + ua * (b.endpoint_b - b.endpoint_a)
            sampled = float(
                np.linalg.norm(pa[:, None, :] - pb[None, :, :], axis=-1).min()
                - a.radius - b.radius
            )
            sampling_ok &= exact <= sampled + 1e-12
            if exact + a.radius + b.radius > 0.2:
                sampling_ok &= abs(exact - sampled) < 1e-3
                checked += 1

        # swept capsule catches a mid-path penetration the endpoints miss
        start = col.Sphere([0.0, 0.0, 0.0], 0.1)
        end = col.Sphere([1.0, 0.0, 0.0], 0.1)
        obstacle = col.Sphere([0.5, 0.15, 0.0], 0.1)
        swept = col.swept_capsules([start], [end])[0]
        swept_ok = (
            col.signed_distance(start, obstacle) > 0
            and col.signed_distance(end, obstacle) > 0
            and col.signed_distance(swept, obstacle) < 0
        )
        report(
            "collision suite",
            grid_ok and sampling_ok and swept_ok,
            f"activation grid {grid_ok}, capsule sampling {sampling_ok}, swept fixture {swept_ok}",
        )
