"""Write LIBSVM copies of the diabetes (Pima) and a9a (UCI adult) datasets.

The raw files are taken from PyPI wheels that bundle them, so no access to
the LIBSVM site is needed:

    pip download --no-deps keel_ds==0.2.5 responsibly==0.1.2 -d /tmp/wheels
    python3 scripts/prepare_datasets.py /tmp/wheels data/

a9a is rebuilt from adult.data with the usual 123-feature binary encoding:
quintile bins for age, fnlwgt, education-num and hours-per-week, a zero /
nonzero split for capital-gain and capital-loss, and one-hot codes for the
categorical columns. Missing values ("?") produce no active feature.
"""
import glob
import os
import sys
import zipfile

WORKCLASS = ["Private", "Self-emp-not-inc", "Self-emp-inc", "Federal-gov",
             "Local-gov", "State-gov", "Without-pay", "Never-worked"]
EDUCATION = ["Bachelors", "Some-college", "11th", "HS-grad", "Prof-school",
             "Assoc-acdm", "Assoc-voc", "9th", "7th-8th", "12th", "Masters",
             "1st-4th", "10th", "Doctorate", "5th-6th", "Preschool"]
MARITAL = ["Married-civ-spouse", "Divorced", "Never-married", "Separated",
           "Widowed", "Married-spouse-absent", "Married-AF-spouse"]
OCCUPATION = ["Tech-support", "Craft-repair", "Other-service", "Sales",
              "Exec-managerial", "Prof-specialty", "Handlers-cleaners",
              "Machine-op-inspct", "Adm-clerical", "Farming-fishing",
              "Transport-moving", "Priv-house-serv", "Protective-serv",
              "Armed-Forces"]
RELATIONSHIP = ["Wife", "Own-child", "Husband", "Not-in-family",
                "Other-relative", "Unmarried"]
RACE = ["White", "Asian-Pac-Islander", "Amer-Indian-Eskimo", "Other", "Black"]
SEX = ["Female", "Male"]
COUNTRY = ["United-States", "Cambodia", "England", "Puerto-Rico", "Canada",
           "Germany", "Outlying-US(Guam-USVI-etc)", "India", "Japan", "Greece",
           "South", "China", "Cuba", "Iran", "Honduras", "Philippines",
           "Italy", "Poland", "Jamaica", "Vietnam", "Mexico", "Portugal",
           "Ireland", "France", "Dominican-Republic", "Laos", "Ecuador",
           "Taiwan", "Haiti", "Columbia", "Hungary", "Guatemala", "Nicaragua",
           "Scotland", "Thailand", "Yugoslavia", "El-Salvador",
           "Trinadad&Tobago", "Peru", "Hong", "Holand-Netherlands"]


def wheel(directory, prefix):
    hits = sorted(glob.glob(os.path.join(directory, prefix + "*.whl")))
    if not hits:
        sys.exit("missing wheel %s* in %s" % (prefix, directory))
    return zipfile.ZipFile(hits[0])


def quintile_edges(values):
    s = sorted(values)
    return [s[len(s) * k // 5] for k in range(1, 5)]


def bin_of(edges, v):
    b = 0
    while b < len(edges) and v >= edges[b]:
        b += 1
    return b


def write_diabetes(wheels, out):
    text = wheel(wheels, "keel_ds").read(
        "keel_ds/data/balanced/raw/pima.dat").decode()
    lines = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("@"):
            continue
        parts = [p.strip() for p in line.split(",")]
        label = "+1" if parts[-1] == "tested_positive" else "-1"
        feats = ["%d:%s" % (k + 1, v) for k, v in enumerate(parts[:-1])
                 if float(v) != 0.0]
        lines.append(" ".join([label] + feats))
    with open(os.path.join(out, "diabetes"), "w") as f:
        f.write("\n".join(lines) + "\n")
    return len(lines)


def write_a9a(wheels, out):
    text = wheel(wheels, "responsibly").read(
        "responsibly/dataset/adult/adult.data").decode()
    rows = [[c.strip() for c in l.split(",")] for l in text.splitlines()
            if l.strip()]
    numeric = {c: quintile_edges([float(r[c]) for r in rows])
               for c in (0, 2, 4, 12)}
    layout = [
        ("bin", 0, 5), ("cat", 1, WORKCLASS), ("bin", 2, 5),
        ("cat", 3, EDUCATION), ("bin", 4, 5), ("cat", 5, MARITAL),
        ("cat", 6, OCCUPATION), ("cat", 7, RELATIONSHIP), ("cat", 8, RACE),
        ("cat", 9, SEX), ("nz", 10, 2), ("nz", 11, 2), ("bin", 12, 5),
        ("cat", 13, COUNTRY),
    ]
    lines = []
    for r in rows:
        label = "+1" if r[14].startswith(">50K") else "-1"
        feats = []
        base = 1
        for kind, col, spec in layout:
            width = len(spec) if kind == "cat" else spec
            v = r[col]
            if v != "?":
                if kind == "cat":
                    feats.append(base + spec.index(v))
                elif kind == "nz":
                    feats.append(base + (1 if float(v) > 0 else 0))
                else:
                    feats.append(base + bin_of(numeric[col], float(v)))
            base += width
        assert base == 124
        lines.append(" ".join([label] + ["%d:1" % f for f in feats]))
    with open(os.path.join(out, "a9a"), "w") as f:
        f.write("\n".join(lines) + "\n")
    return len(lines)


if __name__ == "__main__":
    wheels, out = sys.argv[1], sys.argv[2]
    os.makedirs(out, exist_ok=True)
    print("diabetes rows:", write_diabetes(wheels, out))
    print("a9a rows:", write_a9a(wheels, out))
