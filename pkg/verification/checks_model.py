import numpy as np

from autodiff.gradcheck import grad_check_report
from autodiff.tensor import cross_entropy, no_grad
from model.audit import audit_table, param_audit
from model.modes import MODES, ModelConfig
from model.transformer import Model, attention_map, attention_scores, untied_copy
from verification.registry import check, holds, within

MODULE = 'model'


def tiny_config(mode: str, **overrides) -> ModelConfig:
    values = dict(n_layers=1, n_heads=2, d_model=16, d_ff=32, vocab_size=11, max_seq_len=8,
                  mode=mode, seed=0, dtype='float64')
    values.update(overrides)
    return ModelConfig(**values)


def conditioned_model(mode: str, generator: np.random.Generator) -> Model:
    """Tiny float64 model with a unit-scale token table; smooth enough for h=1e-5 differences"""
    model = Model(tiny_config(mode))
    model.embed.weight.data = generator.normal(0.0, 1.0, size=model.embed.weight.shape)
    return model


@check(MODULE, 'attention_savings_pattern')
def savings_pattern(generator):
    for d_model, n_heads in ((8, 2), (64, 4), (1024, 8)):
        rows = audit_table(ModelConfig(n_layers=2, n_heads=n_heads, d_model=d_model, d_ff=2 * d_model))
        percents = [row.savings_percent for row in rows]
        if percents != [0.0, 25.0, 37.5, 50.0, 25.0, 50.0]:
            return holds(False, f"d_model={d_model}: savings {percents}")
    return holds(True, "0 / 25 / 37.5 / 50 %, crope_qk == half_rope_qk, crope_all == half_rope_all")


@check(MODULE, 'full_width_attention_counts')
def full_width_counts(generator):
    cfg = ModelConfig.full()
    dense = param_audit(cfg).attention // cfg.n_layers
    tied = param_audit(cfg.with_mode('crope_all')).attention // cfg.n_layers
    tiny = param_audit(ModelConfig(n_layers=1, n_heads=2, d_model=8, d_ff=16, mode='crope_qkv'))
    ok = dense == 4_194_304 and tied == 2_097_152 and tiny.attention == 160
    return holds(ok, f"per layer: none {dense:,}, crope_all {tied:,}; d_model=8 crope_qkv {tiny.attention}")


@check(MODULE, 'model_gradients_match_central_differences', seed=30)
def model_grad_check(generator):
    tokens = generator.integers(0, 11, size=(2, 6))
    targets = generator.integers(0, 11, size=(2, 6))
    worst, where = 0.0, ''
    for mode in MODES:
        model = conditioned_model(mode, generator)
        report = grad_check_report(lambda: cross_entropy(model(tokens), targets),
                                   dict(model.named_parameters()), h=1e-5,
                                   max_entries=16, atol=1e-9, seed=30)
        if report['max_rel_error'] >= worst:
            worst, where = report['max_rel_error'], f"worst: {mode} {report['param']}{report['index']}"
    return within(worst, 1e-4, where)


@check(MODULE, 'future_tokens_do_not_change_past_logits', seed=31)
def causality(generator):
    model = Model(tiny_config('crope_all'))
    tokens = generator.integers(0, 11, size=(1, 8))
    worst = 0.0
    with no_grad():
        base = model(tokens).data
        for t in range(7):
            changed = tokens.copy()
            changed[0, t + 1:] = generator.integers(0, 11, size=7 - t)
            worst = max(worst, np.abs(model(changed).data[0, :t + 1] - base[0, :t + 1]).max())
    return within(worst, 1e-12)


@check(MODULE, 'tied_model_equals_dense_twin', seed=32)
def mode_equivalence(generator):
    tokens = generator.integers(0, 11, size=(2, 8))
    for mode in ('crope_qk', 'crope_qkv', 'crope_all'):
        model = Model(tiny_config(mode))
        with no_grad():
            same = np.array_equal(model(tokens).data, untied_copy(model)(tokens).data)
        if not same:
            return holds(False, f"{mode}: dense twin logits differ")
    return holds(True, "bitwise identical logits")


@check(MODULE, 'scores_depend_on_relative_position', seed=33)
def position_relativity(generator):
    model = Model(tiny_config('crope_qk', max_seq_len=16))
    tokens = generator.integers(1, 11, size=6)
    worst = 0.0
    for offset in (1, 3, 10):
        padded = np.concatenate([np.zeros(offset, dtype=tokens.dtype), tokens])
        for head in range(model.cfg.n_heads):
            inner = attention_scores(model, tokens, 0, head)
            outer = attention_scores(model, padded, 0, head)[offset:, offset:]
            worst = max(worst, np.abs(inner - outer).max())
    return within(worst, 1e-6, "layer-0 scores before masking, offsets 1, 3, 10")


@check(MODULE, 'attention_rows_are_distributions', seed=34)
def attention_rows(generator):
    model = Model(tiny_config('half_rope_all'))
    single = attention_map(model, [3], 0, 0)
    if single.shape != (1, 1) or single[0, 0] != 1.0:
        return holds(False, f"T=1 attention map is {single.tolist()}")
    weights = attention_map(model, generator.integers(0, 11, size=8), 0, 1)
    return within(np.abs(weights.sum(axis=-1) - 1.0).max(), 1e-6)
