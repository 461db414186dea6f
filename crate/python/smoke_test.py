"""Smoke test for the swedge extension module: python python/smoke_test.py"""

import math
import random

import swedge


def planted(design, seed, lam):
    rng = random.Random(seed)
    adoption = design.sample_assignment(seed)
    cols = {"cluster": [], "period": [], "z": [], "d": [], "y": []}
    x = []
    for i, a in enumerate(adoption):
        shift = rng.gauss(0.0, 0.05)
        for j in range(design.num_rollout_periods + 2):
            z = j >= a
            for _ in range(30 + rng.randrange(20)):
                d = 1.0 if rng.random() < (0.9 if z else 0.1) else 0.0
                xi = rng.gauss(0.0, 1.0)
                cols["cluster"].append(i + 1)
                cols["period"].append(j)
                cols["z"].append(z)
                cols["d"].append(d)
                cols["y"].append(shift + 0.1 * j + 0.5 * xi + lam * d + rng.gauss(0.0, 0.5))
                x.append(xi)
    return swedge.Dataset.from_columns(design, covariates={"x": x}, **cols)


def main():
    redaps = swedge.Design.one_at_a_time(10)
    assert redaps.num_clusters == 11
    assert redaps.propensity_exact(1) == "1/11"
    assert swedge.Design(3, [1, 2]).assignment_count() == 6
    assert swedge.Design.from_json(redaps.to_json()) == redaps

    design = swedge.Design(30, [5, 10, 15, 20, 25])
    data = planted(design, 7, -0.18)
    assert data.covariate_names == ["x"]

    for estimator in ["unadjusted", "ancova1", "ancova3", "ht", "ht-adj-prepost", "ht-adj-full"]:
        result = swedge.analyze(data, estimator)
        assert abs(result["lambda_hat"] + 0.18) < 0.15, result
        print(f"{estimator:>15}  lambda_hat {result['lambda_hat']:+.4f}  interval {result['interval']}")

    stat = swedge.Method("ancova1", "cr0", "gaussian").statistic(data)
    lam = stat.lambda_hat()
    assert abs(stat.tau(lam)) < 1e-12
    ci = stat.interval(0.05)
    assert ci["type"] == "bounded" and ci["lo"] < lam < ci["hi"]
    assert not stat.rejects(lam, 0.05)
    assert math.isclose(stat.test(0.0)["tau_hat"], stat.intercept)

    try:
        swedge.Method("ht", "cr3")
    except swedge.SwedgeError as e:
        print("mismatched variance rejected:", e)
    else:
        raise AssertionError("expected SwedgeError")

    assert len(swedge.duration_tests(data)) == 4
    assert swedge.balance_table(data)[0]["covariate"] == "x"

    grid = swedge.study_grid(20, 1)
    scenario = next(s for s in grid if s["name"] == "I12J5" and not s["informative_size"])
    scenario["methods"] = [{"estimator": "ancova1"}]
    report = swedge.simulate(scenario)
    assert report["n_reps"] == 20 and len(report["true_lambda"]) == 20
    assert report["methods"][0]["n_estimates"] == 20
    print("simulated", report["cell"], report["methods"][0]["method"], "bias", round(report["methods"][0]["bias"], 4))
    print("ok")


if __name__ == "__main__":
    main()
