import numpy as np
import pytest

from impulsive_iss.core import HistorySegment
from impulsive_iss.dsl import (Binary, Call, Const, Ref, Unary, eval_expr, load_model,
                               parse_expr, parse_model, print_model, to_text, validate_model)
from impulsive_iss.errors import DslError, DslSyntaxError, EvalError
from impulsive_iss.ncs import NcsParams, model_text


def test_parse_quadratic_flow():
    m = parse_model("model m { sub s1[2] { flow x1' = -x1 + x2^2; flow x2' = -x2; } }")
    e = m.subsystems[0].flow[0]
    assert e == Binary("+", Unary("-", Ref("x1")), Binary("^", Ref("x2"), Const(2.0)))


def test_parse_delayed_refs():
    e = parse_expr("-1*e1 + 0.25*e2@0.03 + 0.25*e3@0.03 - 1*nu1")
    delayed = [n for n in _refs(e) if n.delay > 0]
    assert [(r.name, r.delay) for r in delayed] == [("e2", 0.03), ("e3", 0.03)]


def _refs(e):
    from impulsive_iss.dsl import iter_refs
    return list(iter_refs(e))


def test_syntax_error_at_end_of_line():
    with pytest.raises(DslSyntaxError) as exc:
        parse_model("model m { sub s[1] {\nflow x1' = -x1 +\n} }")
    assert exc.value.line == 2
    assert "end of line" in str(exc.value)
    assert str(exc.value).startswith("2:")


def test_syntax_error_single_line_expression():
    with pytest.raises(DslSyntaxError) as exc:
        parse_expr("-x1 +")
    assert exc.value.line == 1


def test_precedence_and_associativity():
    assert parse_expr("2^3^2") == parse_expr("2^(3^2)")
    # the grammar puts the sign outside the power: -2^2 = -(2^2)
    assert eval_expr(parse_expr("-2^2"), {}) == -4.0
    assert eval_expr(parse_expr("2^-1"), {}) == 0.5
    assert eval_expr(parse_expr("1 - 2 - 3"), {}) == -4.0
    assert eval_expr(parse_expr("8 / 2 / 2"), {}) == 2.0


@pytest.mark.parametrize("text,env,value", [
    ("-x1 + x2^2", {"x1": 2.0, "x2": 3.0}, 7.0),
    ("-x2 + 0.5*sqrt(abs(x1))", {"x1": 4.0, "x2": 1.0}, 0.0),
    ("sign(0)", {}, 0.0),
    ("max(1, 3, 2) + min(4, -1)", {}, 2.0),
    ("pow(2, 10)", {}, 1024.0),
])
def test_eval_examples(text, env, value):
    assert eval_expr(parse_expr(text), env) == value


def test_eval_delayed_constant_history():
    seg = HistorySegment.constant([2.0], 0.5)
    assert eval_expr(parse_expr("x1@0.5"), {}, history=seg, state_names=("x1",)) == 2.0


def test_eval_division_by_zero_names_subexpression():
    with pytest.raises(EvalError) as exc:
        eval_expr(parse_expr("1 + x1 / (x2 - x2)"), {"x1": 1.0, "x2": 3.0})
    assert exc.value.subexpression == "(x1 / (x2 - x2))"


def test_eval_sqrt_negative():
    with pytest.raises(EvalError):
        eval_expr(parse_expr("sqrt(x1)"), {"x1": -1.0})


def test_eval_vectorized():
    out = eval_expr(parse_expr("abs(x1) * 2"), {"x1": np.array([-1.0, 2.0])})
    np.testing.assert_array_equal(out, [2.0, 4.0])


def test_validate_ncs_model_clean():
    m = parse_model(model_text(NcsParams()))
    assert validate_model(m) == []
    assert m.theta == 0.03
    assert m.state_names == ("e1", "e2", "e3")
    assert m.input_dim == 6


def test_validate_delay_exceeds_theta():
    m = parse_model("model m { theta 0.03; sub s[1] { flow x1' = -x1@0.05; } }", check=False)
    diags = validate_model(m)
    assert len(diags) == 1
    assert "delay exceeds horizon" in diags[0]


def test_validate_arity_mismatch():
    m = parse_model("model m { sub s[1] { flow x1' = -x1; flow x2' = -x2; } }", check=False)
    diags = validate_model(m)
    assert any("arity" in d for d in diags)


def test_validate_unknown_identifier_and_function():
    m = parse_model("model m { sub s[1] { flow x1' = foo(x1) + y; } }", check=False)
    diags = validate_model(m)
    assert any("unknown function" in d for d in diags)
    assert any("unknown identifier 'y'" in d for d in diags)
    with pytest.raises(DslError) as exc:
        parse_model("model m { sub s[1] { flow x1' = y; } }")
    assert exc.value.diagnostics


def test_validate_mixed_jump_kinds():
    text = ("model m { sub a[1] { flow x1' = -x1; jump point x1 = x1; } "
            "sub b[1] { flow x2' = -x2; jump hist x2 = x2; } }")
    diags = validate_model(parse_model(text, check=False))
    assert any("uniform" in d for d in diags)


def test_params_and_inputs():
    m = parse_model("model m { param k = 2; input u[2]; sub s[1] { flow x1' = -k*x1 + u1 + u2; } }")
    assert m.param_map == {"k": 2.0}
    assert m.input_index("u2") == 1
    assert m.input_names == ("u1", "u2")


def test_print_parse_roundtrip():
    for text in (model_text(NcsParams()),
                 "model q { param c = 0.5; input w[1]; sub s[2] { flow x1' = -(x1 - x2)^2 / c; "
                 "flow x2' = sin(x1) - w; jump point x1 = 2*x1; } }"):
        m = parse_model(text)
        again = parse_model(print_model(m))
        assert again == m
        assert print_model(again) == print_model(m)


def test_to_text_canonical():
    assert to_text(parse_expr("a + b * c")) == "(a + (b * c))"
    assert parse_expr(to_text(parse_expr("-x^2 + max(a, b, c)"))) == parse_expr("-x^2 + max(a, b, c)")
    assert isinstance(parse_expr("max(a, b)"), Call)


def test_load_model_file(models_dir):
    m = load_model(f"{models_dir}/ncs.imp")
    assert m.name == "ncs3"
    assert m.max_delay == 0.03
