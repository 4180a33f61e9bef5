use std::fmt::Write;

use super::arena::{Arena, Node, NodeId};

const PREC_ADD: u8 = 1;
const PREC_MUL: u8 = 2;
const PREC_NEG: u8 = 3;
const PREC_ATOM: u8 = 5;

/// Renders a node in the same grammar the parser accepts.
pub(crate) fn render(arena: &Arena, id: NodeId) -> String {
    let mut out = String::new();
    write_node(arena, id, 0, &mut out);
    out
}

fn flatten_add(arena: &Arena, id: NodeId, terms: &mut Vec<NodeId>) {
    match arena.node(id) {
        Node::Add(a, b) => {
            flatten_add(arena, a, terms);
            flatten_add(arena, b, terms);
        }
        _ => terms.push(id),
    }
}

fn flatten_mul(arena: &Arena, id: NodeId, factors: &mut Vec<NodeId>) {
    match arena.node(id) {
        Node::Mul(a, b) => {
            flatten_mul(arena, a, factors);
            flatten_mul(arena, b, factors);
        }
        _ => factors.push(id),
    }
}

fn precedence(arena: &Arena, id: NodeId) -> u8 {
    match arena.node(id) {
        Node::Add(..) => PREC_ADD,
        Node::Mul(..) => PREC_MUL,
        Node::Pow(_, n) if n < 0 => PREC_MUL,
        Node::Neg(_) => PREC_NEG,
        Node::Const(bits) if f64::from_bits(bits) < 0.0 => PREC_NEG,
        _ => PREC_ATOM,
    }
}

fn write_node(arena: &Arena, id: NodeId, ctx: u8, out: &mut String) {
    let prec = precedence(arena, id);
    let paren = prec < ctx;
    if paren {
        out.push('(');
    }
    match arena.node(id) {
        Node::Const(bits) => write_number(f64::from_bits(bits), out),
        Node::X(i) => {
            let _ = write!(out, "x[{}]", i + 1);
        }
        Node::Y(i) => {
            let _ = write!(out, "y[{}]", i + 1);
        }
        Node::Add(..) => {
            let mut terms = Vec::new();
            flatten_add(arena, id, &mut terms);
            // constants go last so the rendering does not depend on
            // interning order between literals and variables
            terms.sort_by_key(|&t| matches!(arena.node(t), Node::Const(_)));
            for (k, &t) in terms.iter().enumerate() {
                match (k, arena.node(t)) {
                    (0, _) => write_node(arena, t, PREC_ADD, out),
                    (_, Node::Neg(inner)) => {
                        out.push_str(" - ");
                        write_node(arena, inner, PREC_MUL, out);
                    }
                    (_, Node::Const(bits)) if f64::from_bits(bits) < 0.0 => {
                        out.push_str(" - ");
                        write_number(-f64::from_bits(bits), out);
                    }
                    _ => {
                        out.push_str(" + ");
                        write_node(arena, t, PREC_ADD + 1, out);
                    }
                }
            }
        }
        Node::Mul(..) => write_product(arena, id, out),
        Node::Pow(_, n) if n < 0 => write_product(arena, id, out),
        Node::Pow(base, n) => write_power(arena, base, n, out),
        Node::Neg(inner) => {
            out.push('-');
            write_node(arena, inner, PREC_NEG, out);
        }
        Node::Func(f, arg) => {
            out.push_str(f.name());
            out.push('(');
            write_node(arena, arg, 0, out);
            out.push(')');
        }
    }
    if paren {
        out.push(')');
    }
}

fn write_product(arena: &Arena, id: NodeId, out: &mut String) {
    let mut factors = Vec::new();
    flatten_mul(arena, id, &mut factors);
    let mut num = Vec::new();
    let mut den = Vec::new();
    for f in factors {
        match arena.node(f) {
            Node::Pow(base, n) if n < 0 => den.push((base, -n)),
            _ => num.push(f),
        }
    }
    if num.is_empty() {
        out.push('1');
    }
    for (k, &f) in num.iter().enumerate() {
        if k > 0 {
            out.push('*');
        }
        write_node(arena, f, PREC_NEG, out);
    }
    if den.is_empty() {
        return;
    }
    out.push('/');
    let group = den.len() > 1;
    if group {
        out.push('(');
    }
    for (k, &(base, n)) in den.iter().enumerate() {
        if k > 0 {
            out.push('*');
        }
        write_power(arena, base, n, out);
    }
    if group {
        out.push(')');
    }
}

fn write_power(arena: &Arena, base: NodeId, n: i32, out: &mut String) {
    write_node(arena, base, PREC_ATOM, out);
    if n != 1 {
        let _ = write!(out, "^{n}");
    }
}

fn write_number(c: f64, out: &mut String) {
    if c.fract() == 0.0 && c.abs() < 1e15 {
        let _ = write!(out, "{c}");
    } else {
        let _ = write!(out, "{c:?}");
    }
}
