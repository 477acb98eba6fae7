"""Label-set fixtures whose confusion counts are chosen to land on known report rows."""

VOCAB_2017 = ("N", "A", "O", "~")


def build_sets(support, hits, predicted, empty_records, vocab=VOCAB_2017):
    """Single-label ground truth with predictions hitting the given per-class counts.

    ``empty_records`` misses get no prediction at all; the remaining misses get
    one wrong label, and leftover false positives are attached as a second
    label to correctly predicted records of another class.
    """
    true_sets, pred_sets = [], []
    fp_pool = []
    for c in vocab:
        fp_pool += [c] * (predicted[c] - hits[c])
    misses = []
    for c in vocab:
        for i in range(support[c]):
            true_sets.append({c})
            if i < hits[c]:
                pred_sets.append({c})
            else:
                pred_sets.append(set())
                misses.append(len(pred_sets) - 1)

    def take(exclude):
        for j, lab in enumerate(fp_pool):
            if lab not in exclude:
                return fp_pool.pop(j)
        raise ValueError("fixture counts cannot be satisfied")

    for k, idx in enumerate(misses):
        if k >= empty_records:
            pred_sets[idx] = {take(true_sets[idx])}
    idx = 0
    while fp_pool:
        if pred_sets[idx] == true_sets[idx] and fp_pool[0] not in true_sets[idx]:
            pred_sets[idx] = pred_sets[idx] | {fp_pool.pop(0)}
        idx += 1
    return true_sets, pred_sets


# Counts consistent with every row of the 1D ResNet CinC 2017 report.
B4_SUPPORT = {"N": 1044, "A": 140, "O": 473, "~": 49}
B4_HITS = {"N": 981, "A": 122, "O": 326, "~": 25}
B4_PREDICTED = {"N": 1116, "A": 153, "O": 394, "~": 49}
B4_EMPTY = 70

B4_ROWS = [
    r"N & 0.88 & 0.94 & 0.91 & 1044 \\ \hline",
    r"A & 0.80 & 0.87 & 0.83 & 140 \\ \hline",
    r"O & 0.83 & 0.69 & 0.75 & 473 \\ \hline",
    r"~ & 0.51 & 0.51 & 0.51 & 49 \\ \hline",
    r"micro avg & 0.85 & 0.85 & 0.85 & 1706 \\ \hline",
    r"macro avg & 0.75 & 0.75 & 0.75 & 1706 \\ \hline",
    r"weighted avg & 0.85 & 0.85 & 0.85 & 1706 \\ \hline",
    r"samples avg & 0.83 & 0.85 & 0.84 & 1706 \\ \hline",
]


def b4_sets():
    return build_sets(B4_SUPPORT, B4_HITS, B4_PREDICTED, B4_EMPTY)
