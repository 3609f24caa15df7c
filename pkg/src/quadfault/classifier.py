"""CNN fault classifier: construction, training, inference, evaluation.

Input is a 100-timestep x 10-channel window (four RPM setpoints, attitude,
body rates), z-score normalized with training-set statistics. Two conv
blocks (3x3 kernels, 32 then 64 maps, each followed by ReLU and 2x2 max
pooling) feed a 128-wide dense layer and a 16-way softmax, one output per
fault label.
"""

from dataclasses import dataclass

import numpy as np

from quadfault.nn import Conv2D, Dense, Flatten, MaxPool2, ReLU, Sequential, make_optimizer
from quadfault.nn.checkpoint import load_checkpoint, save_checkpoint
from quadfault.nn.losses import softmax_xent
from quadfault.propeller import TrainingDiverged


def _conv_stack(input_shape, n_classes, conv_channels, dense_hidden, rng):
    h, w = input_shape
    layers = []
    c_in = 1
    for c_out in conv_channels:
        if h < 3 or w < 3:
            raise ValueError(f"feature map {h}x{w} too small for another 3x3 conv block")
        layers += [Conv2D(c_in, c_out, rng), ReLU(), MaxPool2()]
        h, w = (h - 2) // 2, (w - 2) // 2
        c_in = c_out
    flat = h * w * c_in
    layers += [Flatten(), Dense(flat, dense_hidden, rng, relu=True),
               Dense(dense_hidden, n_classes, rng)]
    return Sequential(layers)


class CnnModel:
    """Trained-or-trainable classifier bundling the net and its input scaling."""

    def __init__(self, net, input_shape, n_classes, norm_mean, norm_std,
                 conv_channels, dense_hidden):
        self.net = net
        self.input_shape = tuple(input_shape)
        self.n_classes = int(n_classes)
        self.norm_mean = np.asarray(norm_mean, dtype=float)
        self.norm_std = np.asarray(norm_std, dtype=float)
        self.conv_channels = tuple(conv_channels)
        self.dense_hidden = int(dense_hidden)

    def normalize(self, x):
        return (x - self.norm_mean) / self.norm_std

    def logits(self, x_norm):
        """Forward pass on already-normalized (b, H, W) windows."""
        return self.net.forward(x_norm[:, :, :, None])

    def predict_proba(self, x):
        """Raw windows (b, H, W) or (H, W) -> (b, 16) probabilities."""
        x = np.asarray(x, dtype=float)
        squeeze = x.ndim == 2
        if squeeze:
            x = x[None]
        if x.shape[1:] != self.input_shape:
            raise ValueError(f"window shape {x.shape[1:]} != {self.input_shape}")
        logits = self.logits(self.normalize(x))
        shifted = logits - logits.max(axis=1, keepdims=True)
        expz = np.exp(shifted)
        probs = expz / expz.sum(axis=1, keepdims=True)
        return probs[0] if squeeze else probs

    def param_count(self):
        return sum(arr.size for arr in self.net.params().values())

    def save(self, path):
        meta = {
            "input_shape": list(self.input_shape),
            "n_classes": self.n_classes,
            "conv_channels": list(self.conv_channels),
            "dense_hidden": self.dense_hidden,
            "norm_mean": self.norm_mean.tolist(),
            "norm_std": self.norm_std.tolist(),
        }
        save_checkpoint(path, self.net.params(), meta)

    @classmethod
    def load(cls, path):
        arrays, meta = load_checkpoint(path)
        net = _conv_stack(
            meta["input_shape"], meta["n_classes"], meta["conv_channels"],
            meta["dense_hidden"], np.random.default_rng(0),
        )
        net.set_params(arrays)
        return cls(
            net=net,
            input_shape=meta["input_shape"],
            n_classes=meta["n_classes"],
            norm_mean=np.array(meta["norm_mean"]),
            norm_std=np.array(meta["norm_std"]),
            conv_channels=meta["conv_channels"],
            dense_hidden=meta["dense_hidden"],
        )


def build_cnn(input_shape=(100, 10), n_classes=16, seed=0, conv_channels=(32, 64),
              dense_hidden=128, norm_mean=None, norm_std=None) -> CnnModel:
    """Seeded fresh model; norm stats default to identity until training."""
    h, w = input_shape
    if h < 12 or w < 3:
        raise ValueError(f"input shape {input_shape} incompatible with the conv stack")
    rng = np.random.default_rng(seed)
    net = _conv_stack(input_shape, n_classes, conv_channels, dense_hidden, rng)
    n_chan = input_shape[1]
    return CnnModel(
        net=net,
        input_shape=input_shape,
        n_classes=n_classes,
        norm_mean=np.zeros(n_chan) if norm_mean is None else norm_mean,
        norm_std=np.ones(n_chan) if norm_std is None else norm_std,
        conv_channels=conv_channels,
        dense_hidden=dense_hidden,
    )


@dataclass(frozen=True)
class ClassifierTrainConfig:
    batch_size: int = 32
    learning_rate: float = 0.001
    optimizer: str = "adam"
    max_epochs: int = 100
    patience: int = 10
    val_fraction: float = 0.1


def train_classifier(model: CnnModel, x, y, cfg: ClassifierTrainConfig = None, seed=0):
    """Minimize softmax cross-entropy on raw windows x with labels y (1..16).

    A seeded 10% validation slice drives early stopping; the best-validation
    weights are restored at the end. Returns a history dict with per-epoch
    train loss/accuracy and validation accuracy.
    """
    cfg = cfg or ClassifierTrainConfig()
    x = np.asarray(x, dtype=float)
    targets = np.asarray(y, dtype=np.intp) - 1
    if len(x) == 0:
        raise ValueError("empty training set")
    xn = model.normalize(x)

    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(xn))
    n_val = max(1, int(len(xn) * cfg.val_fraction))
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    opt = make_optimizer(cfg.optimizer, cfg.learning_rate)

    history = {"train_loss": [], "train_acc": [], "val_acc": [], "val_loss": []}
    best_loss = np.inf
    best_params = None
    stall = 0
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(train_idx)
        total_loss = 0.0
        correct = 0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            logits = model.logits(xn[idx])
            loss, probs, grad = softmax_xent(logits, targets[idx])
            if not np.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}")
            model.net.backward(grad)
            opt.step(model.net.params(), model.net.grads())
            total_loss += loss * len(idx)
            correct += int((probs.argmax(axis=1) == targets[idx]).sum())
        val_loss, val_acc = _eval_batches(model, xn[val_idx], targets[val_idx], cfg.batch_size)
        history["train_loss"].append(total_loss / len(order))
        history["train_acc"].append(correct / len(order))
        history["val_acc"].append(val_acc)
        history["val_loss"].append(val_loss)
        # early stopping tracks val loss: accuracy saturates long before the
        # fit stops improving
        if val_loss < best_loss:
            best_loss = val_loss
            best_params = {k: v.copy() for k, v in model.net.params().items()}
            stall = 0
        else:
            stall += 1
            if stall >= cfg.patience:
                break
    if best_params is not None:
        model.net.set_params(best_params)
    return history


def _eval_batches(model, xn, targets, batch_size):
    correct = 0
    total_loss = 0.0
    for start in range(0, len(xn), batch_size):
        logits = model.logits(xn[start : start + batch_size])
        loss, probs, _ = softmax_xent(logits, targets[start : start + batch_size])
        total_loss += loss * len(logits)
        correct += int((probs.argmax(axis=1) == targets[start : start + batch_size]).sum())
    n = max(1, len(xn))
    return total_loss / n, correct / n


def predict_label(model: CnnModel, window):
    """One raw window -> (label 1..16, probabilities)."""
    probs = model.predict_proba(window)
    return int(probs.argmax()) + 1, probs


def predict_labels(model: CnnModel, x, batch_size=256):
    x = np.asarray(x, dtype=float)
    out = np.empty(len(x), dtype=np.intp)
    xn = model.normalize(x)
    for start in range(0, len(x), batch_size):
        logits = model.logits(xn[start : start + batch_size])
        out[start : start + batch_size] = logits.argmax(axis=1) + 1
    return out


@dataclass
class EvalReport:
    """Accuracy, 16x16 confusion counts, and the binary fault collapse."""

    accuracy: float            # percent
    confusion: np.ndarray      # (n_classes, n_classes), row=truth, col=prediction
    per_label_accuracy: dict   # label -> percent (labels present in the test set)
    binary_precision: float    # percent; positive class = any fault (labels 2..16)
    binary_recall: float       # percent
    n_samples: int

    def top_confused_pairs(self, k=3):
        """Unordered label pairs by off-diagonal count, descending."""
        n = self.confusion.shape[0]
        pairs = []
        for i in range(n):
            for j in range(i + 1, n):
                count = int(self.confusion[i, j] + self.confusion[j, i])
                if count > 0:
                    pairs.append(((i + 1, j + 1), count))
        pairs.sort(key=lambda item: (-item[1], item[0]))
        return pairs[:k]

    def to_text(self):
        lines = [
            f"samples: {self.n_samples}",
            f"accuracy: {self.accuracy:.2f}%",
            f"binary_precision: {self.binary_precision:.2f}%",
            f"binary_recall: {self.binary_recall:.2f}%",
            "top_confused_pairs: "
            + "; ".join(f"({a},{b}):{c}" for (a, b), c in self.top_confused_pairs(3)),
        ]
        for label in sorted(self.per_label_accuracy):
            lines.append(f"label_{label:02d}_accuracy: {self.per_label_accuracy[label]:.2f}%")
        return "\n".join(lines) + "\n"

    def save(self, report_path, confusion_path, per_label_path):
        with open(report_path, "w") as fh:
            fh.write(self.to_text())
        n = self.confusion.shape[0]
        with open(confusion_path, "w") as fh:
            fh.write("truth\\pred," + ",".join(str(i + 1) for i in range(n)) + "\n")
            for i in range(n):
                fh.write(str(i + 1) + "," + ",".join(str(int(v)) for v in self.confusion[i]) + "\n")
        with open(per_label_path, "w") as fh:
            fh.write("label,accuracy_pct\n")
            for label in sorted(self.per_label_accuracy):
                fh.write(f"{label},{self.per_label_accuracy[label]:.4f}\n")


def evaluate(model_or_pred, x_or_y, y=None) -> EvalReport:
    """EvalReport from a model plus raw windows, or from (predictions, truths)."""
    if y is None:
        preds = np.asarray(model_or_pred, dtype=np.intp)
        truths = np.asarray(x_or_y, dtype=np.intp)
        n_classes = 16
    else:
        model = model_or_pred
        preds = predict_labels(model, x_or_y)
        truths = np.asarray(y, dtype=np.intp)
        n_classes = model.n_classes
    if len(truths) == 0:
        raise ValueError("empty evaluation set")
    if len(preds) != len(truths):
        raise ValueError("prediction/truth length mismatch")

    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(confusion, (truths - 1, preds - 1), 1)
    accuracy = 100.0 * np.trace(confusion) / len(truths)

    per_label = {}
    for label in range(1, n_classes + 1):
        row = confusion[label - 1]
        total = row.sum()
        if total > 0:
            per_label[label] = 100.0 * row[label - 1] / total

    truth_fault = truths != 1
    pred_fault = preds != 1
    tp = int(np.sum(truth_fault & pred_fault))
    fp = int(np.sum(~truth_fault & pred_fault))
    fn = int(np.sum(truth_fault & ~pred_fault))
    precision = 100.0 * tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = 100.0 * tp / (tp + fn) if tp + fn > 0 else 0.0

    return EvalReport(
        accuracy=accuracy,
        confusion=confusion,
        per_label_accuracy=per_label,
        binary_precision=precision,
        binary_recall=recall,
        n_samples=len(truths),
    )
