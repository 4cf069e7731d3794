use std::sync::Arc;

use num_rational::Ratio;
use proptest::prelude::*;

use ford::backend::{AgentParams, Backend, BackendProfile, RequestCache, SyntheticDriver};
use ford::campaign::run_campaign;
use ford::dataset::{Dataset, Example, OptionLabel, TaskKind};
use ford::debate::{ConclusionMode, DebateConfig, DebateStatus, Panel, Participant};
use ford::metrics::{
    build_confusion, percent_2dp, stances_disagree, syn_hard_k, syn_soft_k, ConfusionMatrix, PredictionSet,
};
use ford::prompting::{parse_stance, strip_stance_declarations, PromptingMode};

fn label() -> impl Strategy<Value = OptionLabel> {
    (0usize..5).prop_map(|i| OptionLabel::from_index(i).unwrap())
}

fn example(id: usize, n: usize, gold: usize) -> Example {
    Example {
        id: format!("e{id}"),
        question: format!("Question {id}?"),
        options: (0..n).map(|i| format!("choice {i} of {id}")).collect(),
        gold: OptionLabel::from_index(gold % n).unwrap(),
        task_kind: TaskKind::MultipleChoice,
    }
}

/// Words that cannot form an answer sentence on their own.
fn prose() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(vec!["wrap", "items", "protect", "ship", "boxes", "fragile", "small", "cushion"]), 1..8)
        .prop_map(|w| w.join(" "))
}

proptest! {
    #[test]
    fn confusion_metrics_agree_with_counting(m11 in 0u64..40, m12 in 0u64..40, m21 in 0u64..40, m22 in 0u64..40) {
        let m = ConfusionMatrix::new(m11, m12, m21, m22);
        let total = m11 + m12 + m21 + m22;
        prop_assume!(total > 0);
        let incon = m.incon_exact().unwrap();
        let soft = m.syn_soft_exact().unwrap();
        let hard = m.syn_hard_exact().unwrap();
        let (a1, a2) = (m.accuracy_1().unwrap(), m.accuracy_2().unwrap());
        prop_assert_eq!(soft, (a1 + a2) / 2);
        prop_assert_eq!(incon, a1 + a2 - hard * 2);
        prop_assert!(hard <= soft && soft <= Ratio::from_integer(1));
        prop_assert!(hard <= a1.min(a2) && a1.max(a2) <= hard + incon);
        let swapped = ConfusionMatrix::new(m11, m21, m12, m22);
        prop_assert_eq!(swapped.incon_exact().unwrap(), incon);
        prop_assert_eq!(swapped.syn_soft_exact().unwrap(), soft);
    }

    #[test]
    fn pair_metrics_match_k_way_metrics(rows in prop::collection::vec((0usize..3, 0usize..3, 0usize..3), 1..60)) {
        let ds = Dataset {
            name: "p".into(),
            examples: rows.iter().enumerate().map(|(i, r)| example(i, 3, r.0)).collect(),
            declared_option_count: 3,
        };
        let (mut p1, mut p2) = (PredictionSet::new("a"), PredictionSet::new("b"));
        for (e, r) in ds.examples.iter().zip(&rows) {
            p1.insert(e.id.clone(), OptionLabel::from_index(r.1));
            p2.insert(e.id.clone(), OptionLabel::from_index(r.2));
        }
        let m = build_confusion(&p1, &p2, &ds).unwrap();
        prop_assert_eq!(m.total(), rows.len() as u64);
        let sets = [p1, p2];
        prop_assert_eq!(syn_soft_k(&sets, &ds).unwrap(), m.syn_soft_exact().unwrap());
        prop_assert_eq!(syn_hard_k(&sets, &ds).unwrap(), m.syn_hard_exact().unwrap());
    }

    #[test]
    fn percent_rounding_is_half_up(n in 0u64..100_000, d in 1u64..100_000) {
        prop_assume!(n <= d);
        let s = percent_2dp(Ratio::new(n, d));
        let cents: u128 = s.replace('.', "").parse().unwrap();
        // cents/100 is within half a cent of 100 n / d, ties rounding up
        let exact = Ratio::new(n as u128 * 10_000, d as u128);
        let c = Ratio::from_integer(cents);
        prop_assert!(c - Ratio::new(1, 2) <= exact && exact < c + Ratio::new(1, 2));
    }

    #[test]
    fn disagreement_is_order_free(stances in prop::collection::vec(prop::option::of(label()), 1..6)) {
        let mut rev = stances.clone();
        rev.reverse();
        prop_assert_eq!(stances_disagree(&stances), stances_disagree(&rev));
        prop_assert_eq!(stances_disagree(&stances), stances.iter().any(|s| *s != stances[0]));
    }

    #[test]
    fn stripping_is_idempotent(sentences in prop::collection::vec(
        prop_oneof![
            prose().prop_map(|p| format!("{p}.")),
            label().prop_map(|l| format!("Answer: ({l}) is more plausible.")),
            label().prop_map(|l| format!("Therefore, the answer is ({l}).")),
            label().prop_map(|l| format!("Option ({l}) suggests {l}.")),
        ],
        0..8,
    )) {
        let ex = example(0, 5, 0);
        let text = sentences.join(" ");
        let once = strip_stance_declarations(&text, &ex);
        prop_assert_eq!(strip_stance_declarations(&once, &ex), once.clone());
        prop_assert_eq!(parse_stance(&once, &ex).stance, None);
    }

    #[test]
    fn rendered_answers_parse_back(l in label(), expl in prose(), form in 0usize..3) {
        let ex = example(0, 5, 0);
        let text = match form {
            0 => format!("Answer: ({l}) is more plausible. Explanation: {expl}."),
            1 => format!(" {expl}. Therefore, the answer is ({l})."),
            _ => format!("I think option ({l}) is more plausible, {expl}."),
        };
        let p = parse_stance(&text, &ex);
        prop_assert_eq!(p.stance, Some(l));
        if form < 2 {
            prop_assert_eq!(p.explanation, format!("{expl}."));
        }
    }

    #[test]
    fn synthetic_debates_respect_the_protocol(
        seed in any::<u64>(),
        cap in 0.0f64..=1.0,
        s1 in 0.0f64..=1.0,
        s2 in 0.0f64..=1.0,
        k in 2usize..4,
        extra in 0usize..4,
    ) {
        let ds = Dataset { name: "syn".into(), examples: (0..12).map(|i| example(i, 2, i)).collect(), declared_option_count: 2 };
        let stub = [s1, s2, s1];
        let participants: Vec<Participant> = (0..k)
            .map(|i| Participant {
                id: format!("agent{i}"),
                profile: BackendProfile::synthetic(format!("m{i}"), AgentParams::new(cap, stub[i], seed ^ i as u64)),
                prompting_mode: PromptingMode::ZeroShotChat,
                speaking_position: i + 1,
            })
            .collect();
        let max_rounds = k + extra;
        let cfg = DebateConfig { participants, max_rounds, conclusion_mode: ConclusionMode::EqualWeight, judge_profile: None };
        let driver = Arc::new(SyntheticDriver::new([&ds]));
        let cache = Arc::new(RequestCache::in_memory());
        let panel = Panel::new(&cfg, |p| Backend::new(p.clone(), driver.clone(), cache.clone()), |_| Ok(None)).unwrap();
        let res = run_campaign(&ds, &panel, None, 2).unwrap();
        prop_assert!(!res.partial());
        for r in res.completed() {
            let Some(d) = &r.debate else {
                prop_assert!(!stances_disagree(&r.initial_stances()));
                continue;
            };
            prop_assert!(d.round_count <= max_rounds);
            prop_assert_eq!(d.round_count, d.turns.len());
            let h = d.history();
            for snapshot in &h[1..h.len() - 1] {
                prop_assert!(stances_disagree(snapshot));
            }
            match d.status {
                DebateStatus::Consensus => prop_assert!(!stances_disagree(h.last().unwrap())),
                DebateStatus::Exhausted => prop_assert_eq!(d.round_count, max_rounds),
                other => prop_assert!(false, "unexpected status {:?}", other),
            }
            let o = r.outcome.as_ref().unwrap();
            prop_assert!(o.final_stances.values().any(|s| *s == o.conclusion));
        }
    }
}
