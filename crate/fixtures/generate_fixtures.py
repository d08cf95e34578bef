"""Regenerates the fixture CSVs in this directory.

The wave files are reconstructed from published aggregates: per-survey
respondent totals and wave counts, the March wave sizes, reported design
effect ranges and the mid-May total errors. Intermediate waves interpolate
between those anchor points, so they are illustrative rather than exact
replicas of each weekly release.
"""

import csv
import datetime as dt
import os

HERE = os.path.dirname(os.path.abspath(__file__))
POPULATION = 255_200_373

D = dt.date


def interp(anchors, day):
    for (d0, v0), (d1, v1) in zip(anchors, anchors[1:]):
        if d0 <= day <= d1:
            t = (day - d0).days / (d1 - d0).days
            return v0 + t * (v1 - v0)
    raise ValueError(day)


# share of US adults with at least one dose
UPTAKE = [
    (D(2020, 12, 14), 0.0),
    (D(2021, 1, 1), 0.015),
    (D(2021, 1, 15), 0.045),
    (D(2021, 2, 1), 0.10),
    (D(2021, 2, 15), 0.155),
    (D(2021, 3, 1), 0.205),
    (D(2021, 3, 15), 0.27),
    (D(2021, 4, 1), 0.37),
    (D(2021, 4, 15), 0.47),
    (D(2021, 5, 1), 0.555),
    (D(2021, 5, 15), 0.595),
    (D(2021, 5, 31), 0.625),
]


def benchmark_counts():
    out = []
    day = UPTAKE[0][0]
    while day <= UPTAKE[-1][0]:
        out.append((day, round(interp(UPTAKE, day) * POPULATION)))
        day += dt.timedelta(days=1)
    return out


COUNTS = dict(benchmark_counts())


def bench(day):
    return COUNTS[day] / POPULATION


def write(name, header, rows):
    with open(os.path.join(HERE, name), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def spread(total, k, fixed_index, fixed_value, shape):
    """Integer sizes summing to total, with one wave pinned."""
    rest = total - fixed_value
    weights = [shape(i) for i in range(k) if i != fixed_index]
    raw = [rest * w / sum(weights) for w in weights]
    sizes = [int(x) for x in raw]
    sizes[-1] += rest - sum(sizes)
    sizes.insert(fixed_index, fixed_value)
    assert sum(sizes) == total
    return sizes


WAVE_HEADER = ["survey_id", "wave_start", "wave_end", "n", "estimate", "se", "design_effect", "cv_w"]


def waves(survey, ends, span, sizes, errors, deffs):
    rows = []
    for end, n, err, de in zip(ends, sizes, errors, deffs):
        est = round(bench(end) + err, 4)
        se = round((est * (1 - est) / n) ** 0.5, 6)
        rows.append([survey, end - dt.timedelta(days=span), end, n, est, se, de, ""])
    return rows


def main():
    write("cdc_benchmark.csv", ["date", "cumulative_count"], benchmark_counts())

    fb_ends = [D(2021, 1, 9) + dt.timedelta(weeks=k) for k in range(19)]
    fb_sizes = spread(4_525_633, 19, 11, 181_949, lambda i: 1.0 + 0.1 * ((i * 7) % 5))
    fb_err = [0.02 + (0.17 - 0.02) * (k / 18) ** 1.3 for k in range(19)]
    fb_err[-1] = 0.17
    fb_de = [1.48, 1.49, 1.48, 1.47, 1.48, 1.49, 1.48, 1.48, 1.49, 1.48, 1.47,
             1.48, 1.48, 1.49, 1.48, 1.48, 1.48, 1.48, 1.48]
    write("delphi_facebook.csv", WAVE_HEADER, waves("delphi_facebook", fb_ends, 6, fb_sizes, fb_err, fb_de))

    hp_ends = [D(2021, 1, 18), D(2021, 2, 1), D(2021, 2, 15), D(2021, 3, 1),
               D(2021, 3, 15), D(2021, 3, 29), D(2021, 4, 26), D(2021, 5, 10)]
    hp_sizes = spread(606_615, 8, 5, 76_068, lambda i: 1.0 + 0.05 * (i % 3))
    hp_err = [0.03, 0.045, 0.06, 0.07, 0.085, 0.095, 0.12, 0.14]
    hp_de = [4.4, 4.5, 4.6, 4.5, 4.7, 4.8, 4.6, 4.6]
    write("household_pulse.csv", WAVE_HEADER, waves("household_pulse", hp_ends, 12, hp_sizes, hp_err, hp_de))

    ax_ends = [D(2021, 1, 11), D(2021, 1, 25), D(2021, 2, 8), D(2021, 2, 22), D(2021, 3, 8),
               D(2021, 3, 22), D(2021, 4, 5), D(2021, 4, 19), D(2021, 4, 26), D(2021, 5, 3),
               D(2021, 5, 10)]
    ax_sizes = spread(11_421, 11, 5, 995, lambda i: 1.0 + 0.02 * (i % 4))
    ax_err = [0.005, 0.01, 0.012, 0.008, 0.015, 0.02, 0.018, 0.025, 0.03, 0.025, 0.042]
    ax_de = [1.1, 1.15, 1.2, 1.1, 1.15, 1.1, 1.2, 1.15, 1.1, 1.2, 1.15]
    write("axios_ipsos.csv", WAVE_HEADER, waves("axios_ipsos", ax_ends, 3, ax_sizes, ax_err, ax_de))

    # willing share per May wave; hesitant fills the remainder
    outcomes = []
    for name, rows, will in [
        ("delphi_facebook", waves("delphi_facebook", fb_ends, 6, fb_sizes, fb_err, fb_de), 0.09),
        ("household_pulse", waves("household_pulse", hp_ends, 12, hp_sizes, hp_err, hp_de), 0.11),
    ]:
        for r in rows:
            if r[2].month == 5:
                v = r[4]
                outcomes.append([name, r[2], v, will, round(1 - v - will, 4)])
    write("outcomes_may.csv", ["survey_id", "wave_end", "vaccinated", "willing", "hesitant"], outcomes)

    comp = {
        "education": {
            "High School": (0.19, 0.21, 0.14, 0.39, 0.39),
            "Some College": (0.36, 0.36, 0.32, 0.30, 0.30),
            "4-Year College": (0.25, 0.25, 0.29, 0.17, 0.19),
            "Post-Graduate": (0.20, 0.18, 0.26, 0.13, 0.11),
        },
        "race_ethnicity": {
            "White": (0.74, 0.68, 0.75, 0.62, 0.60),
            "Black": (0.06, 0.06, 0.07, 0.11, 0.12),
            "Hispanic": (0.11, 0.16, 0.10, 0.17, 0.16),
            "Asian": (0.02, 0.03, 0.05, 0.05, 0.06),
            "Other": (0.07, 0.07, 0.03, 0.05, 0.06),
        },
    }
    names = ["delphi_facebook_raw", "delphi_facebook_weighted", "household_pulse_raw",
             "household_pulse_weighted", "acs_benchmark"]
    for idx, name in enumerate(names):
        rows = [[dim, cat, vals[idx]] for dim, cats in comp.items() for cat, vals in cats.items()]
        write(f"composition_{name}.csv", ["dimension", "category", "share"], rows)

    # all-ages totals and age-split doses for the imputation example
    dates = [D(2021, 4, 1), D(2021, 4, 2), D(2021, 4, 3)]
    totals = [101_000_000, 102_500_000, 104_000_000]
    write("cdc_all_ages.csv", ["date", "cumulative_count"], list(zip(dates, totals)))
    ages = []
    for day, total in zip(dates, totals):
        for j, share, adult_frac in [("CA", 0.30, 0.985), ("NY", 0.25, 0.99), ("FL", 0.35, 0.992),
                                     ("TX", 0.10, 0.95)]:
            doses = round(total * share)
            ages.append([day, j, "adult", round(doses * adult_frac)])
            ages.append([day, j, "minor", doses - round(doses * adult_frac)])
    write("age_doses.csv", ["date", "jurisdiction", "age_group", "cumulative_doses"], ages)

    # retroactively revised snapshots for April 3-12
    os.makedirs(os.path.join(HERE, "snapshots"), exist_ok=True)
    first = D(2021, 4, 12)
    window = [D(2021, 4, 3) + dt.timedelta(days=k) for k in range(10)]
    revisions = {
        D(2021, 4, 12): lambda d: 1.0,
        D(2021, 4, 21): lambda d: 1.0 + {12: 0.045, 11: 0.025}.get(d.day, 0.012),
        D(2021, 5, 5): lambda d: 1.0 + {12: 0.055, 11: 0.035}.get(d.day, 0.018),
        D(2021, 5, 26): lambda d: 1.0 + {12: 0.06, 11: 0.04}.get(d.day, 0.02),
    }
    for as_of, factor in revisions.items():
        rows = []
        for d in window:
            base = COUNTS[d] * (0.97 if (first - d).days < 1 else 0.99)
            rows.append((d, round(base * factor(d))))
        write(f"snapshots/cdc_{as_of}.csv", ["date", "cumulative_count"], rows)


if __name__ == "__main__":
    main()
