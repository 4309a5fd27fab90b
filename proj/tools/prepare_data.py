#!/usr/bin/env python3
"""Convert the public benchmark datasets into the CSV layout the manifests expect.

Raw files are not downloaded here; fetch them first (URLs below), then run e.g.

    python3 tools/prepare_data.py german path/to/german.data datasets/german.csv

Sources:
  german: https://archive.ics.uci.edu/dataset/144 (statlog german.data)
  adult:  https://archive.ics.uci.edu/dataset/2   (adult.data)
  compas: https://github.com/propublica/compas-analysis (compas-scores-two-years.csv)
  bank:   https://archive.ics.uci.edu/dataset/222 (bank-full.csv)
"""

import csv
import sys

GERMAN_COLUMNS = [
    "checking_status", "duration", "credit_history", "purpose", "credit_amount",
    "savings", "employment", "installment_rate", "personal_status", "other_parties",
    "residence_since", "property_magnitude", "age", "other_payment_plans", "housing",
    "existing_credits", "job", "num_dependents", "own_telephone", "foreign_worker",
]

ADULT_COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education_num", "marital_status",
    "occupation", "relationship", "race", "sex", "capital_gain", "capital_loss",
    "hours_per_week", "native_country", "income",
]

COMPAS_KEEP = [
    "sex", "age", "race", "juv_fel_count", "juv_misd_count", "juv_other_count",
    "priors_count", "c_charge_degree", "two_year_recid",
]


def convert_german(src, dst):
    # space-separated, A91/A93/A94 code male, A92/A95 female; target 1=good 2=bad
    with open(src) as f, open(dst, "w", newline="") as out:
        w = csv.writer(out)
        w.writerow(GERMAN_COLUMNS + ["sex", "risk"])
        for line in f:
            fields = line.split()
            if len(fields) != 21:
                continue
            sex = "female" if fields[8] in ("A92", "A95") else "male"
            risk = "good" if fields[20] == "1" else "bad"
            w.writerow(fields[:20] + [sex, risk])


def convert_adult(src, dst):
    with open(src) as f, open(dst, "w", newline="") as out:
        w = csv.writer(out)
        w.writerow(ADULT_COLUMNS)
        for row in csv.reader(f):
            if len(row) != len(ADULT_COLUMNS):
                continue
            row = [c.strip().rstrip(".") for c in row]
            w.writerow(row)


def convert_compas(src, dst):
    with open(src) as f, open(dst, "w", newline="") as out:
        r = csv.DictReader(f)
        w = csv.writer(out)
        w.writerow(COMPAS_KEEP)
        for row in r:
            # standard ProPublica filter for valid two-year records
            try:
                days = int(row["days_b_screening_arrest"] or "9999")
            except ValueError:
                days = 9999
            if not (-30 <= days <= 30):
                continue
            if row["is_recid"] == "-1" or row["c_charge_degree"] == "O":
                continue
            if row["score_text"] == "N/A":
                continue
            w.writerow([row[c] for c in COMPAS_KEEP])


def convert_bank(src, dst):
    # semicolon-separated with quoted fields; adds a protected age_group column
    with open(src) as f, open(dst, "w", newline="") as out:
        r = csv.reader(f, delimiter=";")
        header = next(r)
        age_ix = header.index("age")
        w = csv.writer(out)
        w.writerow(header + ["age_group"])
        for row in r:
            age = int(row[age_ix])
            group = "25-60" if 25 <= age <= 60 else "outside-25-60"
            w.writerow(row + [group])


CONVERTERS = {
    "german": convert_german,
    "adult": convert_adult,
    "compas": convert_compas,
    "bank": convert_bank,
}


def main():
    if len(sys.argv) != 4 or sys.argv[1] not in CONVERTERS:
        names = "|".join(CONVERTERS)
        print(f"usage: prepare_data.py {names} <raw-input> <output-csv>", file=sys.stderr)
        return 1
    CONVERTERS[sys.argv[1]](sys.argv[2], sys.argv[3])
    return 0


if __name__ == "__main__":
    sys.exit(main())
