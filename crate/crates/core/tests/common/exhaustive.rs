use attraudit_core::attack::SynonymLexicon;
use attraudit_core::util::token_hash;
use attraudit_core::Instance;

/// Best rewrite found by plain enumeration.
pub struct Exhaustive {
    /// `(objective, token hash, rewrite)` of the best candidate, if any.
    pub best: Option<(f64, u64, Instance)>,
    pub candidates: usize,
}

/// Enumerates every non-empty set of at most `budget` swaps along `order`
/// (one synonym per position) such that each prefix of the set, applied in
/// visiting order, passes `evaluate`; keeps the lexicographic minimum of
/// `(objective, token hash)`.
pub fn exhaustive_attack(
    x: &Instance,
    order: &[usize],
    lexicon: &SynonymLexicon,
    budget: usize,
    evaluate: &dyn Fn(&Instance) -> Option<f64>,
) -> Exhaustive {
    fn go(
        at: usize,
        current: &Instance,
        used: usize,
        order: &[usize],
        x: &Instance,
        lexicon: &SynonymLexicon,
        budget: usize,
        evaluate: &dyn Fn(&Instance) -> Option<f64>,
        out: &mut Exhaustive,
    ) {
        if used == budget {
            return;
        }
        for (j, &pos) in order.iter().enumerate().skip(at) {
            let old = x.token(pos).unwrap();
            for syn in lexicon.synonyms(old) {
                let next = current.with_replaced(pos, &syn.word);
                let Some(obj) = evaluate(&next) else { continue };
                out.candidates += 1;
                let hash = token_hash(next.tokens());
                let better = match &out.best {
                    None => true,
                    Some((o, h, _)) => obj.total_cmp(o).then(hash.cmp(h)).is_lt(),
                };
                if better {
                    out.best = Some((obj, hash, next.clone()));
                }
                go(j + 1, &next, used + 1, order, x, lexicon, budget, evaluate, out);
            }
        }
    }
    let mut out = Exhaustive { best: None, candidates: 0 };
    go(0, x, 0, order, x, lexicon, budget, evaluate, &mut out);
    out
}
