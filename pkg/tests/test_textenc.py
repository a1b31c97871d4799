import math

import numpy as np
import pytest

from app.errors import ArgumentError, ConfigurationError
from app.models.config_models import EncoderDims
from app.models.essay_models import EMOTION_LABELS
from app.services.nncore import AdamState, adam_step, grad_check, init_params, log_softmax, nll_loss
from app.services.textenc import (
    CLS_ID,
    EOS_ID,
    FIRST_WORD_ID,
    PAD_ID,
    UNK_ID,
    EncoderModel,
    LabelTokenPair,
    Seq2SeqModel,
    build_vocab,
    constrained_argmax,
    decode_constrained,
    decode_many,
    encode_batch,
    encode_pooled,
    encoder_specs,
    normalize_words,
    read_vocab,
    seq2seq_logprob,
    stack_batch,
    tokenize,
    write_vocab,
)

WORDS = ("today i read about a flood that wrecked the town and many families lost their homes "
         "it made me sad and angry that help was slow to arrive for people in need of shelter food water")


@pytest.fixture
def vocab():
    return build_vocab([WORDS, "joyful news about surprise gifts", "fear of the dark night"])


def seq2seq(vocab, dims, seed=4):
    return Seq2SeqModel(vocab, init_params(Seq2SeqModel.layer_specs(dims, vocab.size), seed), dims)


class TestVocab:
    def test_frequency_then_alphabetical(self):
        vocab = build_vocab(["a b", "a c"])
        assert vocab.word_id("a") == FIRST_WORD_ID
        assert vocab.word_id("a") < vocab.word_id("b") < vocab.word_id("c")

    def test_deterministic(self):
        assert build_vocab([WORDS]) == build_vocab([WORDS])

    def test_min_freq(self):
        vocab = build_vocab(["a b", "a c"], min_freq=2)
        assert vocab.words() == ["a"]
        seq = tokenize("a b c", vocab, max_len=6)
        assert seq.ids.tolist() == [CLS_ID, FIRST_WORD_ID, UNK_ID, UNK_ID, PAD_ID, PAD_ID]

    def test_max_size_must_cover_reserved_tokens(self):
        with pytest.raises(ConfigurationError):
            build_vocab(["a"], max_size=5)

    def test_empty_texts(self):
        with pytest.raises(ArgumentError):
            build_vocab([])

    def test_label_block(self, vocab):
        assert vocab.label_ids == list(range(4, 11))
        for label in EMOTION_LABELS:
            assert vocab.label_for_id(vocab.label_id(label)) == label
        with pytest.raises(ArgumentError):
            vocab.label_for_id(EOS_ID)

    def test_file_round_trip(self, vocab, tmp_path):
        write_vocab(vocab, tmp_path / "vocab.txt")
        assert read_vocab(tmp_path / "vocab.txt") == vocab


class TestTokenize:
    def test_normalization(self):
        assert normalize_words("Hello, WORLD!") == ["hello", "world"]
        assert normalize_words("don't  stop...") == ["don't", "stop"]
        assert normalize_words(" ... ") == []

    def test_unknown_words_and_mask(self):
        vocab = build_vocab(["hello"])
        seq = tokenize("Hello WORLD", vocab, max_len=5)
        assert seq.ids.tolist() == [CLS_ID, FIRST_WORD_ID, UNK_ID, PAD_ID, PAD_ID]
        assert seq.true_length == 3
        assert seq.attention_mask.tolist() == [True, True, True, False, False]

    def test_truncation(self, vocab):
        seq = tokenize("flood " * 1000, vocab, max_len=128)
        assert seq.true_length == 128
        assert seq.attention_mask.all()

    def test_empty_text_is_cls_only(self, vocab):
        seq = tokenize("", vocab, max_len=4)
        assert seq.ids.tolist() == [CLS_ID, PAD_ID, PAD_ID, PAD_ID]
        assert seq.true_length == 1

    def test_max_len_floor(self, vocab):
        with pytest.raises(ArgumentError):
            tokenize("a", vocab, max_len=1)

    def test_stack_batch_trims_to_longest(self, vocab):
        ids, mask = stack_batch([tokenize("flood town", vocab, 16), tokenize("flood", vocab, 16)])
        assert ids.shape == (2, 3)
        assert mask.tolist() == [[True, True, True], [True, True, False]]


class TestEncoder:
    def test_pooled_shape_and_determinism(self, vocab, tiny_dims):
        store = init_params(encoder_specs(tiny_dims, vocab.size), seed=1)
        model = EncoderModel(vocab, store, tiny_dims)
        seq = tokenize(WORDS, vocab, tiny_dims.max_len)
        first = encode_pooled(model, seq)
        assert first.shape == (tiny_dims.model_dim,)
        assert np.array_equal(first, encode_pooled(model, seq))

    def test_pooled_is_first_token_state(self, vocab, tiny_dims):
        model = EncoderModel(vocab, init_params(encoder_specs(tiny_dims, vocab.size), seed=1), tiny_dims)
        seq = tokenize(WORDS, vocab, tiny_dims.max_len)
        hidden, _ = model.forward(seq.ids[None, :], seq.attention_mask[None, :])
        pooled = encode_pooled(model, seq)
        assert np.array_equal(pooled, hidden[0, 0])
        assert not np.allclose(pooled, hidden[0, :seq.true_length].mean(axis=0))

    def test_padding_content_is_invisible(self, vocab, tiny_dims):
        model = EncoderModel(vocab, init_params(encoder_specs(tiny_dims, vocab.size), seed=1), tiny_dims)
        seq = tokenize("a flood wrecked the town", vocab, tiny_dims.max_len)
        ids = seq.ids[None, :].copy()
        noisy = ids.copy()
        noisy[0, seq.true_length:] = FIRST_WORD_ID + 3
        mask = seq.attention_mask[None, :]
        assert np.array_equal(model.pooled(ids, mask), model.pooled(noisy, mask))

    def test_batch_matches_single(self, vocab, tiny_dims):
        model = EncoderModel(vocab, init_params(encoder_specs(tiny_dims, vocab.size), seed=1), tiny_dims)
        seqs = [tokenize(text, vocab, tiny_dims.max_len) for text in ("flood", WORDS, "fear of the dark")]
        batched = encode_batch(model, seqs, batch_size=2, workers=2)
        single = np.stack([encode_pooled(model, seq) for seq in seqs])
        assert np.allclose(batched, single, atol=1e-12)

    def test_sequence_length_must_match(self, vocab, tiny_dims):
        model = EncoderModel(vocab, init_params(encoder_specs(tiny_dims, vocab.size), seed=1), tiny_dims)
        with pytest.raises(ArgumentError):
            encode_pooled(model, tokenize("flood", vocab, tiny_dims.max_len + 1))


class TestSeq2Seq:
    def test_logprob_is_a_probability(self, vocab, tiny_dims):
        model = seq2seq(vocab, tiny_dims)
        lp1, lp2 = seq2seq_logprob(model, tokenize(WORDS, vocab, tiny_dims.max_len),
                                   LabelTokenPair(vocab.label_id("joy")))
        assert lp1 <= 0.0 and lp2 <= 0.0

    def test_first_step_distribution_is_normalized(self, vocab, tiny_dims):
        model = seq2seq(vocab, tiny_dims)
        seq = tokenize(WORDS, vocab, tiny_dims.max_len)
        ids, mask = stack_batch([seq])
        log_probs = log_softmax(model.first_step_logits(ids, mask)[0])
        assert np.exp(log_probs).sum() == pytest.approx(1.0, abs=1e-9)
        for label in EMOTION_LABELS:
            lp1, _ = seq2seq_logprob(model, seq, LabelTokenPair(vocab.label_id(label)))
            assert lp1 == pytest.approx(log_probs[vocab.label_id(label)], abs=1e-9)

    def test_untrained_model_is_near_uniform_over_labels(self, vocab, tiny_dims):
        model = seq2seq(vocab, tiny_dims)
        uniform = 1.0 / vocab.size
        seq = tokenize(WORDS, vocab, tiny_dims.max_len)
        for label in EMOTION_LABELS:
            lp1, _ = seq2seq_logprob(model, seq, LabelTokenPair(vocab.label_id(label)))
            assert uniform / 10 <= math.exp(lp1) <= uniform * 10

    def test_non_label_target(self, vocab, tiny_dims):
        model = seq2seq(vocab, tiny_dims)
        with pytest.raises(ArgumentError):
            seq2seq_logprob(model, tokenize("flood", vocab, tiny_dims.max_len), LabelTokenPair(FIRST_WORD_ID))

    def test_batch_loss_matches_per_example(self, vocab, tiny_dims):
        model = seq2seq(vocab, tiny_dims)
        texts = ["flood town", WORDS, "fear of the dark"]
        labels = ["sadness", "anger", "fear"]
        seqs = [tokenize(text, vocab, tiny_dims.max_len) for text in texts]
        ids, mask = stack_batch(seqs)
        label_ids = np.array([vocab.label_id(label) for label in labels])
        batch = model.nll_and_grad(ids, mask, label_ids)
        single = sum(nll_loss(seq2seq_logprob(model, seq, LabelTokenPair(vocab.label_id(label))))
                     for seq, label in zip(seqs, labels))
        assert batch == pytest.approx(single, abs=1e-9)

    def test_gradients_match_finite_differences(self, vocab, tiny_dims):
        model = seq2seq(vocab, tiny_dims)
        ids, mask = stack_batch([tokenize("flood town", vocab, tiny_dims.max_len),
                                 tokenize("fear of the dark night", vocab, tiny_dims.max_len)])
        label_ids = np.array([vocab.label_id("sadness"), vocab.label_id("fear")])
        worst = grad_check(lambda store: model.nll_and_grad(ids, mask, label_ids), model.params, eps=1e-4)
        assert worst < 1e-4

    def test_overfit_one_example(self, vocab, small_dims):
        model = seq2seq(vocab, small_dims)
        seq = tokenize(WORDS, vocab, small_dims.max_len)
        ids, mask = stack_batch([seq])
        label_ids = np.array([vocab.label_id("disgust")])
        state = AdamState(lr=5e-3)
        for _ in range(300):
            model.nll_and_grad(ids, mask, label_ids)
            adam_step(model.params, state)
        lp1, lp2 = seq2seq_logprob(model, seq, LabelTokenPair(vocab.label_id("disgust")))
        assert lp1 + lp2 > math.log(0.99)
        assert decode_constrained(model, seq)[0] == "disgust"


class TestDecoding:
    def test_constrained_argmax_skips_non_labels(self, vocab):
        logits = np.zeros(vocab.size)
        logits[FIRST_WORD_ID] = 50.0
        logits[vocab.label_id("joy")] = 2.0
        assert constrained_argmax(logits, vocab.label_ids) == vocab.label_id("joy")

    def test_ties_go_to_lowest_id(self, vocab):
        logits = np.zeros(vocab.size)
        assert constrained_argmax(logits, vocab.label_ids) == vocab.label_id("sadness")

    def test_decode_returns_a_label_deterministically(self, vocab, tiny_dims):
        model = seq2seq(vocab, tiny_dims)
        seqs = [tokenize(text, vocab, tiny_dims.max_len) for text in (WORDS, "", "surprise gifts")]
        first = decode_many(model, seqs, batch_size=2)
        assert [label for label, _ in first] == [label for label, _ in decode_many(model, seqs, batch_size=1)]
        for label, score in first:
            assert label in EMOTION_LABELS
            assert score <= 0.0
