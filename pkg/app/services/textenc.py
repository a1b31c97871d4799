"""
Word-level vocabulary, tokenization, and the two tiny transformers built on
the numeric core: a pre-norm encoder whose pooled output is the first
([cls]) position, and an encoder-decoder that scores the two-token target
(label token, eos token).

Fixed ids: pad=0, unk=1, cls=2, eos=3, then one id per emotion label in
reporting order (4..10); corpus words start at id 11. The decoder is started
with the pad id.
"""

import logging
import unicodedata
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel

from ..errors import ArgumentError, ConfigurationError
from ..models.config_models import EncoderDims
from ..models.essay_models import EMOTION_LABELS
from . import layers
from .nncore import LayerKind, LayerSpec, ParameterStore, log_softmax, nll_loss

logger = logging.getLogger(__name__)

PAD_ID, UNK_ID, CLS_ID, EOS_ID = 0, 1, 2, 3
SPECIAL_TOKENS = ["<pad>", "<unk>", "<cls>", "<eos>"]
LABEL_OFFSET = len(SPECIAL_TOKENS)
LABEL_TOKENS = [f"<{label}>" for label in EMOTION_LABELS]
RESERVED_TOKENS = SPECIAL_TOKENS + LABEL_TOKENS
FIRST_WORD_ID = len(RESERVED_TOKENS)
DECODER_START_ID = PAD_ID


def _strip_punctuation(token: str) -> str:
    start, end = 0, len(token)
    while start < end and unicodedata.category(token[start]).startswith("P"):
        start += 1
    while end > start and unicodedata.category(token[end - 1]).startswith("P"):
        end -= 1
    return token[start:end]


def normalize_words(text: str) -> List[str]:
    """Lowercase, split on Unicode whitespace, strip leading/trailing punctuation, drop empties"""
    words = (_strip_punctuation(token) for token in text.lower().split())
    return [word for word in words if word]


class Vocab(BaseModel):
    """Bijective token <-> id mapping with the reserved block first"""
    token_to_id: Dict[str, int]
    id_to_token: List[str]

    @classmethod
    def from_words(cls, words: Iterable[str]) -> "Vocab":
        id_to_token = list(RESERVED_TOKENS)
        for word in words:
            if word in RESERVED_TOKENS:
                continue
            id_to_token.append(word)
        token_to_id = {token: index for index, token in enumerate(id_to_token)}
        if len(token_to_id) != len(id_to_token):
            raise ConfigurationError("vocabulary words must be unique")
        return cls(token_to_id=token_to_id, id_to_token=id_to_token)

    @property
    def size(self) -> int:
        return len(self.id_to_token)

    def words(self) -> List[str]:
        return self.id_to_token[FIRST_WORD_ID:]

    def word_id(self, word: str) -> int:
        """Id of a corpus word; reserved spellings and OOV words map to unk"""
        index = self.token_to_id.get(word, UNK_ID)
        return index if index >= FIRST_WORD_ID else UNK_ID

    def label_id(self, label: str) -> int:
        return LABEL_OFFSET + EMOTION_LABELS.index(label)

    @property
    def label_ids(self) -> List[int]:
        return list(range(LABEL_OFFSET, LABEL_OFFSET + len(EMOTION_LABELS)))

    def is_label_id(self, token_id: int) -> bool:
        return LABEL_OFFSET <= token_id < LABEL_OFFSET + len(EMOTION_LABELS)

    def label_for_id(self, token_id: int) -> str:
        if not self.is_label_id(token_id):
            raise ArgumentError(f"token id {token_id} is not a label token")
        return EMOTION_LABELS[token_id - LABEL_OFFSET]


def build_vocab(texts: Sequence[str], min_freq: int = 1, max_size: int = 20000) -> Vocab:
    """Words ordered by (frequency desc, token asc), kept if freq >= min_freq, truncated to max_size overall"""
    if not texts:
        raise ArgumentError("cannot build a vocabulary from no texts")
    if max_size < len(RESERVED_TOKENS):
        raise ConfigurationError(
            f"max_size {max_size} is smaller than the {len(RESERVED_TOKENS)} special and label tokens"
        )
    counts = Counter(word for text in texts for word in normalize_words(text) if word not in RESERVED_TOKENS)
    ranked = sorted((item for item in counts.items() if item[1] >= min_freq), key=lambda item: (-item[1], item[0]))
    kept = [word for word, _ in ranked[: max_size - len(RESERVED_TOKENS)]]
    logger.info("vocabulary: %d distinct words, %d kept", len(counts), len(kept))
    return Vocab.from_words(kept)


def write_vocab(vocab: Vocab, path: Union[str, Path]) -> None:
    """UTF-8, one corpus word per line; line i holds id FIRST_WORD_ID + i"""
    with open(path, "w", encoding="utf-8") as handle:
        for word in vocab.words():
            handle.write(word + "\n")


def read_vocab(path: Union[str, Path]) -> Vocab:
    with open(path, "r", encoding="utf-8") as handle:
        return Vocab.from_words(line.rstrip("\n") for line in handle if line.rstrip("\n"))


@dataclass(frozen=True, eq=False)
class TokenSeq:
    """[cls] + word ids, padded to max_len"""
    ids: np.ndarray
    true_length: int
    attention_mask: np.ndarray


def tokenize(text: str, vocab: Vocab, max_len: int) -> TokenSeq:
    if max_len < 2:
        raise ArgumentError(f"max_len must be at least 2, got {max_len}")
    ids = [CLS_ID] + [vocab.word_id(word) for word in normalize_words(text)]
    ids = ids[:max_len]
    padded = np.full(max_len, PAD_ID, dtype=np.int64)
    padded[: len(ids)] = ids
    return TokenSeq(ids=padded, true_length=len(ids), attention_mask=np.arange(max_len) < len(ids))


def stack_batch(seqs: Sequence[TokenSeq]) -> Tuple[np.ndarray, np.ndarray]:
    """(ids, mask) trimmed to the longest real length in the batch"""
    length = max(seq.true_length for seq in seqs)
    ids = np.stack([seq.ids[:length] for seq in seqs])
    mask = np.stack([seq.attention_mask[:length] for seq in seqs])
    return ids, mask


def encoder_specs(dims: EncoderDims, vocab_size: int, prefix: str = "enc", embed_name: str = "embed",
                  with_embedding: bool = True) -> List[LayerSpec]:
    specs = []
    if with_embedding:
        specs.append(LayerSpec(name=embed_name, kind=LayerKind.EMBEDDING,
                               dims={"vocab_size": vocab_size, "model_dim": dims.model_dim}))
    for layer in range(dims.layers):
        base = f"{prefix}.{layer}"
        specs += [
            LayerSpec(name=f"{base}.ln1", kind=LayerKind.LAYER_NORM, dims={"dim": dims.model_dim}),
            LayerSpec(name=f"{base}.attn", kind=LayerKind.MULTI_HEAD_ATTENTION,
                      dims={"model_dim": dims.model_dim, "heads": dims.heads}),
            LayerSpec(name=f"{base}.ln2", kind=LayerKind.LAYER_NORM, dims={"dim": dims.model_dim}),
            LayerSpec(name=f"{base}.ff", kind=LayerKind.FEED_FORWARD_GELU,
                      dims={"model_dim": dims.model_dim, "ff_dim": dims.ff_dim}),
        ]
    specs.append(LayerSpec(name=f"{prefix}.ln_f", kind=LayerKind.LAYER_NORM, dims={"dim": dims.model_dim}))
    return specs


def decoder_specs(dims: EncoderDims, vocab_size: int, prefix: str = "dec") -> List[LayerSpec]:
    specs = []
    for layer in range(dims.layers):
        base = f"{prefix}.{layer}"
        specs += [
            LayerSpec(name=f"{base}.ln1", kind=LayerKind.LAYER_NORM, dims={"dim": dims.model_dim}),
            LayerSpec(name=f"{base}.self_attn", kind=LayerKind.MULTI_HEAD_ATTENTION,
                      dims={"model_dim": dims.model_dim, "heads": dims.heads}),
            LayerSpec(name=f"{base}.ln2", kind=LayerKind.LAYER_NORM, dims={"dim": dims.model_dim}),
            LayerSpec(name=f"{base}.cross_attn", kind=LayerKind.MULTI_HEAD_ATTENTION,
                      dims={"model_dim": dims.model_dim, "heads": dims.heads}),
            LayerSpec(name=f"{base}.ln3", kind=LayerKind.LAYER_NORM, dims={"dim": dims.model_dim}),
            LayerSpec(name=f"{base}.ff", kind=LayerKind.FEED_FORWARD_GELU,
                      dims={"model_dim": dims.model_dim, "ff_dim": dims.ff_dim}),
        ]
    specs += [
        LayerSpec(name=f"{prefix}.ln_f", kind=LayerKind.LAYER_NORM, dims={"dim": dims.model_dim}),
        LayerSpec(name=f"{prefix}.head", kind=LayerKind.SOFTMAX_HEAD,
                  dims={"model_dim": dims.model_dim, "vocab_size": vocab_size}),
    ]
    return specs


class EncoderModel:
    """Pre-norm transformer encoder; pooled output is the final hidden state at position 0"""

    def __init__(self, vocab: Vocab, params: ParameterStore, dims: EncoderDims,
                 prefix: str = "enc", embed_name: str = "embed"):
        self.vocab = vocab
        self.params = params
        self.dims = dims
        self.prefix = prefix
        self.embed_name = embed_name

    def check_batch(self, ids: np.ndarray) -> None:
        if ids.ndim != 2 or ids.shape[1] > self.dims.max_len:
            raise ArgumentError(f"expected (batch, <= {self.dims.max_len}) token ids, got shape {ids.shape}")
        if ids.size and (ids.min() < 0 or ids.max() >= self.vocab.size):
            raise ArgumentError("token id outside the model vocabulary")

    def forward(self, ids: np.ndarray, mask: np.ndarray):
        self.check_batch(ids)
        p, dims = self.params, self.dims
        x = layers.embedding_forward(p, self.embed_name, ids) + layers.sinusoidal_positions(ids.shape[1], dims.model_dim)
        caches = []
        for layer in range(dims.layers):
            base = f"{self.prefix}.{layer}"
            a, c_ln1 = layers.layer_norm_forward(p, f"{base}.ln1", x)
            att, c_att = layers.attention_forward(p, f"{base}.attn", a, a, mask, dims.heads)
            x = x + att
            f, c_ln2 = layers.layer_norm_forward(p, f"{base}.ln2", x)
            ff, c_ff = layers.feed_forward_forward(p, f"{base}.ff", f)
            x = x + ff
            caches.append((c_ln1, c_att, c_ln2, c_ff))
        out, c_final = layers.layer_norm_forward(p, f"{self.prefix}.ln_f", x)
        return out, (ids, caches, c_final)

    def backward(self, d_out: np.ndarray, cache) -> None:
        ids, caches, c_final = cache
        p = self.params
        dx = layers.layer_norm_backward(p, f"{self.prefix}.ln_f", d_out, c_final)
        for layer in reversed(range(self.dims.layers)):
            base = f"{self.prefix}.{layer}"
            c_ln1, c_att, c_ln2, c_ff = caches[layer]
            d_f = layers.feed_forward_backward(p, f"{base}.ff", dx, c_ff)
            dx = dx + layers.layer_norm_backward(p, f"{base}.ln2", d_f, c_ln2)
            d_q, d_kv = layers.attention_backward(p, f"{base}.attn", dx, c_att)
            dx = dx + layers.layer_norm_backward(p, f"{base}.ln1", d_q + d_kv, c_ln1)
        layers.embedding_backward(p, self.embed_name, ids, dx)

    def pooled(self, ids: np.ndarray, mask: np.ndarray) -> np.ndarray:
        hidden, _ = self.forward(ids, mask)
        return hidden[:, 0, :]


def encode_pooled(model: EncoderModel, seq: TokenSeq) -> np.ndarray:
    """Pooled first-token output of one sequence, shape (model_dim,)"""
    if seq.ids.shape[0] != model.dims.max_len:
        raise ArgumentError(f"sequence length {seq.ids.shape[0]} does not match model max_len {model.dims.max_len}")
    ids, mask = stack_batch([seq])
    return model.pooled(ids, mask)[0]


def encode_batch(model: EncoderModel, seqs: Sequence[TokenSeq], batch_size: int = 32, workers: int = 1) -> np.ndarray:
    """Pooled outputs for many sequences, in input order; batches may run on a thread pool"""
    if not seqs:
        return np.zeros((0, model.dims.model_dim))
    chunks = [seqs[start:start + batch_size] for start in range(0, len(seqs), batch_size)]

    def run(chunk):
        return model.pooled(*stack_batch(chunk))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(run, chunks))
    else:
        outputs = [run(chunk) for chunk in chunks]
    return np.concatenate(outputs, axis=0)


@dataclass(frozen=True)
class LabelTokenPair:
    """Decoder target: a label token followed by eos"""
    label_id: int
    eos_id: int = EOS_ID


class Seq2SeqModel:
    """Encoder-decoder sharing one embedding table; decoder has causal self-attention and cross-attention"""

    def __init__(self, vocab: Vocab, params: ParameterStore, dims: EncoderDims):
        self.vocab = vocab
        self.params = params
        self.dims = dims
        self.encoder = EncoderModel(vocab, params, dims, prefix="enc", embed_name="embed")

    @staticmethod
    def layer_specs(dims: EncoderDims, vocab_size: int) -> List[LayerSpec]:
        return encoder_specs(dims, vocab_size, prefix="enc") + decoder_specs(dims, vocab_size, prefix="dec")

    def decoder_forward(self, dec_ids: np.ndarray, enc_out: np.ndarray, enc_mask: np.ndarray):
        p, dims = self.params, self.dims
        y = layers.embedding_forward(p, "embed", dec_ids) + layers.sinusoidal_positions(dec_ids.shape[1], dims.model_dim)
        self_mask = np.ones(dec_ids.shape, dtype=bool)
        caches = []
        for layer in range(dims.layers):
            base = f"dec.{layer}"
            a, c_ln1 = layers.layer_norm_forward(p, f"{base}.ln1", y)
            att, c_self = layers.attention_forward(p, f"{base}.self_attn", a, a, self_mask, dims.heads, causal=True)
            y = y + att
            b, c_ln2 = layers.layer_norm_forward(p, f"{base}.ln2", y)
            cross, c_cross = layers.attention_forward(p, f"{base}.cross_attn", b, enc_out, enc_mask, dims.heads)
            y = y + cross
            c, c_ln3 = layers.layer_norm_forward(p, f"{base}.ln3", y)
            ff, c_ff = layers.feed_forward_forward(p, f"{base}.ff", c)
            y = y + ff
            caches.append((c_ln1, c_self, c_ln2, c_cross, c_ln3, c_ff))
        z, c_final = layers.layer_norm_forward(p, "dec.ln_f", y)
        logits, c_head = layers.linear_forward(p, "dec.head", z)
        return logits, (dec_ids, caches, c_final, c_head)

    def decoder_backward(self, d_logits: np.ndarray, cache) -> np.ndarray:
        """Accumulates decoder gradients; returns the gradient w.r.t. the encoder output"""
        dec_ids, caches, c_final, c_head = cache
        p = self.params
        dz = layers.linear_backward(p, "dec.head", d_logits, c_head)
        dy = layers.layer_norm_backward(p, "dec.ln_f", dz, c_final)
        d_enc = None
        for layer in reversed(range(self.dims.layers)):
            base = f"dec.{layer}"
            c_ln1, c_self, c_ln2, c_cross, c_ln3, c_ff = caches[layer]
            d_c = layers.feed_forward_backward(p, f"{base}.ff", dy, c_ff)
            dy = dy + layers.layer_norm_backward(p, f"{base}.ln3", d_c, c_ln3)
            d_b, d_kv = layers.attention_backward(p, f"{base}.cross_attn", dy, c_cross)
            d_enc = d_kv if d_enc is None else d_enc + d_kv
            dy = dy + layers.layer_norm_backward(p, f"{base}.ln2", d_b, c_ln2)
            d_q, d_self_kv = layers.attention_backward(p, f"{base}.self_attn", dy, c_self)
            dy = dy + layers.layer_norm_backward(p, f"{base}.ln1", d_q + d_self_kv, c_ln1)
        layers.embedding_backward(p, "embed", dec_ids, dy)
        return d_enc

    def teacher_forced(self, ids: np.ndarray, mask: np.ndarray, label_ids: np.ndarray):
        """Log-probabilities (batch, 2) of (label, eos) under teacher forcing, plus the forward caches"""
        enc_out, enc_cache = self.encoder.forward(ids, mask)
        dec_ids = np.stack([np.full(len(label_ids), DECODER_START_ID), label_ids], axis=1)
        logits, dec_cache = self.decoder_forward(dec_ids, enc_out, mask)
        log_probs = log_softmax(logits)
        rows = np.arange(len(label_ids))
        gold = np.stack([log_probs[rows, 0, label_ids], log_probs[rows, 1, EOS_ID]], axis=1)
        return gold, (log_probs, dec_cache, enc_cache)

    def nll_and_grad(self, ids: np.ndarray, mask: np.ndarray, label_ids: np.ndarray, scale: float = 1.0) -> float:
        """Summed negative log-likelihood of the batch; accumulates scale * d(NLL)/d(params)"""
        gold, (log_probs, dec_cache, enc_cache) = self.teacher_forced(ids, mask, label_ids)
        rows = np.arange(len(label_ids))
        d_logits = np.exp(log_probs)
        d_logits[rows, 0, label_ids] -= 1.0
        d_logits[rows, 1, EOS_ID] -= 1.0
        d_enc = self.decoder_backward(d_logits * scale, dec_cache)
        self.encoder.backward(d_enc, enc_cache)
        return nll_loss(gold)

    def first_step_logits(self, ids: np.ndarray, mask: np.ndarray) -> np.ndarray:
        enc_out, _ = self.encoder.forward(ids, mask)
        dec_ids = np.full((ids.shape[0], 1), DECODER_START_ID)
        logits, _ = self.decoder_forward(dec_ids, enc_out, mask)
        return logits[:, 0, :]


def _check_target(model: Seq2SeqModel, target: LabelTokenPair) -> None:
    if not model.vocab.is_label_id(target.label_id):
        raise ArgumentError(f"target token id {target.label_id} is outside the label block")
    if target.eos_id != EOS_ID:
        raise ArgumentError(f"second target token must be eos ({EOS_ID}), got {target.eos_id}")


def seq2seq_logprob(model: Seq2SeqModel, seq: TokenSeq, target: LabelTokenPair) -> Tuple[float, float]:
    """(log p(label | c), log p(eos | label, c)) by teacher forcing"""
    _check_target(model, target)
    ids, mask = stack_batch([seq])
    gold, _ = model.teacher_forced(ids, mask, np.array([target.label_id]))
    return float(gold[0, 0]), float(gold[0, 1])


def constrained_argmax(logits: np.ndarray, allowed_ids: Sequence[int]) -> int:
    """Argmax restricted to allowed ids; ties go to the lowest id"""
    allowed = sorted(allowed_ids)
    masked = np.full(logits.shape[-1], -np.inf)
    masked[allowed] = logits[allowed]
    return int(np.argmax(masked))


def decode_batch(model: Seq2SeqModel, seqs: Sequence[TokenSeq]) -> List[Tuple[str, float]]:
    """Constrained greedy decoding: best label token, then forced eos"""
    ids, mask = stack_batch(seqs)
    first = model.first_step_logits(ids, mask)
    label_ids = np.array([constrained_argmax(row, model.vocab.label_ids) for row in first])
    gold, _ = model.teacher_forced(ids, mask, label_ids)
    return [(model.vocab.label_for_id(int(label_id)), float(gold[i].sum())) for i, label_id in enumerate(label_ids)]


def decode_constrained(model: Seq2SeqModel, seq: TokenSeq) -> Tuple[str, float]:
    return decode_batch(model, [seq])[0]


def decode_many(model: Seq2SeqModel, seqs: Sequence[TokenSeq], batch_size: int = 32,
                workers: int = 1) -> List[Tuple[str, float]]:
    chunks = [seqs[start:start + batch_size] for start in range(0, len(seqs), batch_size)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda chunk: decode_batch(model, chunk), chunks))
    else:
        results = [decode_batch(model, chunk) for chunk in chunks]
    return [item for chunk in results for item in chunk]
