"""Regenerate the bundled example dataset in src/rankgas/data/.

Twelve teams over 30 seasons; the six strongest take part every season and
two of the remaining six qualify each year. One participant hosts and gets
the ``home`` indicator. Rankings are drawn among participants only, so
the matching fit setting is ``absent_mode = "zero-score"``.
"""

from pathlib import Path

import numpy as np

from rankgas.gas_filter import ZERO_SCORE, ModelSpec, ParameterVector
from rankgas.io import write_dataset, write_rows
from rankgas.simulation import simulate_panel

TEAMS = ["Aurora", "Borealis", "Cascade", "Dune", "Ember", "Fjord",
         "Glacier", "Harbor", "Isle", "Juniper", "Kestrel", "Lagoon"]


def main(out=Path(__file__).resolve().parents[1] / "src" / "rankgas" / "data"):
    rng = np.random.default_rng(5)
    n, t_len = len(TEAMS), 30
    omega = np.linspace(1.5, -1.5, n)
    params = ParameterVector(omega, [0.3], [0.4], [0.5])
    spec = ModelSpec.mean_reverting(n, 1, absent_mode=ZERO_SCORE)
    participants = np.zeros((t_len, n), dtype=bool)
    participants[:, :6] = True
    home = np.zeros((t_len, n, 1))
    for t in range(t_len):
        participants[t, 6 + rng.choice(6, size=2, replace=False)] = True
        home[t, rng.choice(np.flatnonzero(participants[t])), 0] = 1.0
    data, _ = simulate_panel(params, spec, t_len, rng, covariates=home,
                             participants=participants, item_labels=TEAMS)
    data = type(data)(data.orders, data.n_ranked, data.covariates, data.participants,
                      data.item_labels, ("home",), tuple(str(1990 + t) for t in range(t_len)))
    paths = write_dataset(data, out)
    # keep only the host rows: the home covariate is declared sparse
    rows = [(time, data.item_labels[i], "home", "1")
            for t, time in enumerate(data.time_labels)
            for i in sorted(range(n), key=lambda i: TEAMS[i]) if home[t, i, 0] == 1.0]
    write_rows(paths["covariates"], ("time", "item", "covariate", "value"), rows)
    print(*paths.values(), sep="\n")


if __name__ == "__main__":
    main()
