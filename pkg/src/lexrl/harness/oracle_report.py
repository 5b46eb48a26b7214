"""Exhaustive-search report for a tabular MDP file."""

from __future__ import annotations

import numpy as np

from .. import oracle


def build_report(mdp: oracle.TabularMdp, name: str | None = None) -> dict:
    policy = oracle.brute_force_lex_optimal(mdp)
    values = oracle.all_policy_values(mdp, policy)
    undominated = oracle.brute_force_lex_optimal(mdp, return_all=True)
    report = {
        "name": name,
        "num_states": mdp.num_states,
        "num_actions": mdp.num_actions,
        "num_constraints": mdp.num_constraints,
        "gamma": mdp.gamma,
        "thresholds": [float(k) for k in mdp.thresholds],
        "policy": [int(u) for u in policy],
        "state_values": [[round(float(x), 12) + 0.0 for x in row] for row in values],
        "expected_costs": [round(oracle.expected_cost(mdp, policy, v), 12) + 0.0 for v in range(mdp.num_constraints + 1)],
        "feasibility": oracle.feasibility_check(mdp, policy).value,
        "undominated": any(np.array_equal(policy, p) for p in undominated),
        "num_undominated": int(len(undominated)),
        "policies_enumerated": int(mdp.num_actions ** mdp.num_states),
    }
    if mdp.num_constraints == 0:
        report["value_iteration_policy"] = [int(u) for u in oracle.value_iteration(mdp, 0)[1]]
    return report


def format_report(report: dict) -> str:
    lines = [
        f"MDP {report['name'] or '(unnamed)'}: {report['num_states']} states, "
        f"{report['num_actions']} actions, {report['num_constraints']} constraints, gamma {report['gamma']}",
        f"lexicographically optimal policy: {report['policy']}",
    ]
    for v, cost in enumerate(report["expected_costs"]):
        label = "primary" if v == 0 else f"constraint {v} (K = {report['thresholds'][v - 1]:g})"
        lines.append(f"  J_{v} = {cost:.6f}  [{label}]")
    lines.append(f"feasibility: {report['feasibility']}")
    lines.append(
        f"undominated among {report['policies_enumerated']} policies: "
        f"{'yes' if report['undominated'] else 'NO'} ({report['num_undominated']} undominated in total)"
    )
    return "\n".join(lines)
