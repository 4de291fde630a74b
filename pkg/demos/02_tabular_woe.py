# Weight-of-evidence preprocessing for the structured block: impute missing
# values with training means, quantile-bin, encode each bin as the log ratio
# of good to bad shares, then select features by information value and
# variance inflation.

from textcredit.corpus import stratified_split
from textcredit.synthgen import generate, planted_config
from textcredit.tabular import (
    encode,
    fit_binning,
    fit_woe,
    impute,
    select_by_iv,
    vif_filter,
)

dataset, _ = generate(planted_config(n=1500, default_rate=0.10, seed=3))
split = stratified_split(dataset, train_frac=0.7, val_frac_of_train=0.2, seed=7)
print(f"train/val/test: {len(split.train)}/{len(split.val)}/{len(split.test)}")

filled = impute(dataset, split.train)
binning = fit_binning(filled, split.train, n_bins=5)
table = fit_woe(filled, split.train, binning, smoothing=0.5)

print("\nfeature            IV        bins (woe)")
for name in dataset.feature_names:
    fw = table.features[name]
    woes = " ".join(f"{w:+.2f}" for w in fw.woe)
    print(f"{name:18s} {fw.iv:8.4f}  {woes}")

selected = select_by_iv(table, dataset.feature_names, lo=0.01, hi=0.50)
print("\nIV-selected (0.01 < IV < 0.50):", selected)

matrix = encode(filled, table, selected)
train_rows = matrix.values[list(split.train)]
from textcredit.tabular import EncodedMatrix

train_matrix = EncodedMatrix(
    ids=tuple(matrix.ids[i] for i in split.train),
    columns=matrix.columns,
    values=train_rows,
)
kept = vif_filter(train_matrix, threshold=10.0)
print("after VIF <= 10:", kept)
print("\nencoded matrix:", matrix.values.shape, "first row:", matrix.values[0].round(3))
