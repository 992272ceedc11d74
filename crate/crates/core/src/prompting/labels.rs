//! Label verbalization schemes.

use serde::{Deserialize, Serialize};

use super::PromptError;
use crate::corpus::{BinaryLabel, Task, TaskLabel, UnifiedCategory};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelScheme {
    /// `benign` / `illicit`, or the category names.
    #[default]
    Original,
    /// Binary only: the two label strings swapped.
    Inverted,
    /// Meaningless symbols in option-list order.
    Abstract,
    /// Binary only: demonstrations carry no label at all.
    None,
}

/// Symbol alphabet for [`LabelScheme::Abstract`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbstractSymbols {
    /// "0", "1", ...
    #[default]
    Digits,
    /// "A", "B", ...
    Letters,
}

/// Multiclass options in the order the prompt lists them.
pub const MULTICLASS_OPTION_ORDER: [UnifiedCategory; 13] = [
    UnifiedCategory::Benign,
    UnifiedCategory::Porn,
    UnifiedCategory::Surrogacy,
    UnifiedCategory::Gambling,
    UnifiedCategory::Drug,
    UnifiedCategory::DataTheft,
    UnifiedCategory::MoneyLaundry,
    UnifiedCategory::Counterfeit,
    UnifiedCategory::Advertisement,
    UnifiedCategory::Weapon,
    UnifiedCategory::Fraud,
    UnifiedCategory::Hacking,
    UnifiedCategory::Others,
];

/// Task labels in option-list order.
pub fn option_order(task: Task) -> Vec<TaskLabel> {
    match task {
        Task::Binary => BinaryLabel::ALL
            .into_iter()
            .map(TaskLabel::Binary)
            .collect(),
        Task::Multiclass => MULTICLASS_OPTION_ORDER
            .into_iter()
            .map(TaskLabel::Category)
            .collect(),
    }
}

fn symbol(position: usize, symbols: AbstractSymbols) -> String {
    match symbols {
        AbstractSymbols::Digits => position.to_string(),
        AbstractSymbols::Letters => char::from(b'A' + position as u8).to_string(),
    }
}

/// Verbalizes `label` under `scheme`. `Ok(None)` means the label is not
/// shown (the no-label scheme).
pub fn apply_label_scheme(
    label: TaskLabel,
    scheme: LabelScheme,
    symbols: AbstractSymbols,
) -> Result<Option<String>, PromptError> {
    let task = label.task();
    match (scheme, label) {
        (LabelScheme::Original, l) => Ok(Some(l.as_str().to_string())),
        (LabelScheme::Inverted, TaskLabel::Binary(b)) => Ok(Some(b.flipped().as_str().to_string())),
        (LabelScheme::None, TaskLabel::Binary(_)) => Ok(None),
        (LabelScheme::Inverted | LabelScheme::None, TaskLabel::Category(_)) => {
            Err(PromptError::UnsupportedScheme { scheme, task })
        }
        (LabelScheme::Abstract, l) => {
            let pos = option_order(task)
                .iter()
                .position(|o| *o == l)
                .expect("every label is in the option list");
            Ok(Some(symbol(pos, symbols)))
        }
    }
}

/// Bidirectional label mapping for one (task, scheme) pair.
#[derive(Debug, Clone)]
pub struct Verbalizer {
    task: Task,
    scheme: LabelScheme,
    symbols: AbstractSymbols,
}

impl Verbalizer {
    pub fn new(
        task: Task,
        scheme: LabelScheme,
        symbols: AbstractSymbols,
    ) -> Result<Self, PromptError> {
        if task == Task::Multiclass && matches!(scheme, LabelScheme::Inverted | LabelScheme::None) {
            return Err(PromptError::UnsupportedScheme { scheme, task });
        }
        Ok(Verbalizer {
            task,
            scheme,
            symbols,
        })
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn scheme(&self) -> LabelScheme {
        self.scheme
    }

    /// Label text shown after `Answer:` in a demonstration.
    pub fn demo_label(&self, label: TaskLabel) -> Result<Option<String>, PromptError> {
        if label.task() != self.task {
            return Err(PromptError::LabelTaskMismatch(label.to_string()));
        }
        apply_label_scheme(label, self.scheme, self.symbols)
    }

    /// Name used for `label` in the instruction block and option list. The
    /// no-label scheme still names the options with their original strings.
    pub fn option_name(&self, label: TaskLabel) -> String {
        let scheme = if self.scheme == LabelScheme::None {
            LabelScheme::Original
        } else {
            self.scheme
        };
        apply_label_scheme(label, scheme, self.symbols)
            .expect("scheme validated at construction")
            .expect("only the no-label scheme hides labels")
    }

    /// Strings the model may answer with, in option-list order.
    pub fn allowed_labels(&self) -> Vec<String> {
        option_order(self.task)
            .into_iter()
            .map(|l| self.option_name(l))
            .collect()
    }

    /// Maps an allowed answer string back to the task label it stands for.
    pub fn decode(&self, answer: &str) -> Option<TaskLabel> {
        option_order(self.task)
            .into_iter()
            .find(|l| self.option_name(*l) == answer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    const B: TaskLabel = TaskLabel::Binary(BinaryLabel::Benign);
    const I: TaskLabel = TaskLabel::Binary(BinaryLabel::Illicit);

    #[test]
    fn binary_schemes() {
        let d = AbstractSymbols::Digits;
        assert_eq!(
            apply_label_scheme(I, LabelScheme::Inverted, d)
                .unwrap()
                .as_deref(),
            Some("benign")
        );
        assert_eq!(
            apply_label_scheme(B, LabelScheme::Original, d)
                .unwrap()
                .as_deref(),
            Some("benign")
        );
        assert_eq!(
            apply_label_scheme(B, LabelScheme::Abstract, d)
                .unwrap()
                .as_deref(),
            Some("0")
        );
        assert_eq!(
            apply_label_scheme(I, LabelScheme::Abstract, d)
                .unwrap()
                .as_deref(),
            Some("1")
        );
        assert_eq!(
            apply_label_scheme(I, LabelScheme::Abstract, AbstractSymbols::Letters)
                .unwrap()
                .as_deref(),
            Some("B")
        );
        assert_eq!(apply_label_scheme(I, LabelScheme::None, d).unwrap(), None);
    }

    #[test]
    fn inversion_is_an_involution() {
        for l in BinaryLabel::ALL {
            let once = apply_label_scheme(
                TaskLabel::Binary(l),
                LabelScheme::Inverted,
                AbstractSymbols::Digits,
            )
            .unwrap()
            .unwrap();
            let back: BinaryLabel = once.parse().unwrap();
            let twice = apply_label_scheme(
                TaskLabel::Binary(back),
                LabelScheme::Inverted,
                AbstractSymbols::Digits,
            )
            .unwrap()
            .unwrap();
            assert_eq!(twice, l.as_str());
        }
    }

    #[test]
    fn multiclass_abstract_is_a_bijection() {
        let mut seen = HashSet::new();
        for cat in UnifiedCategory::ALL {
            let s = apply_label_scheme(
                TaskLabel::Category(cat),
                LabelScheme::Abstract,
                AbstractSymbols::Digits,
            )
            .unwrap()
            .unwrap();
            let n: usize = s.parse().unwrap();
            assert!(n <= 12);
            assert!(seen.insert(s));
        }
        assert_eq!(seen.len(), 13);
        assert_eq!(
            apply_label_scheme(
                TaskLabel::Category(UnifiedCategory::Gambling),
                LabelScheme::Abstract,
                AbstractSymbols::Digits
            )
            .unwrap()
            .as_deref(),
            Some("3")
        );
    }

    #[test]
    fn multiclass_rejects_binary_only_schemes() {
        let g = TaskLabel::Category(UnifiedCategory::Gambling);
        for scheme in [LabelScheme::Inverted, LabelScheme::None] {
            assert!(matches!(
                apply_label_scheme(g, scheme, AbstractSymbols::Digits),
                Err(PromptError::UnsupportedScheme { .. })
            ));
            assert!(Verbalizer::new(Task::Multiclass, scheme, AbstractSymbols::Digits).is_err());
        }
    }

    #[test]
    fn verbalizer_decodes_what_it_encodes() {
        for (task, scheme) in [
            (Task::Binary, LabelScheme::Original),
            (Task::Binary, LabelScheme::Inverted),
            (Task::Binary, LabelScheme::Abstract),
            (Task::Binary, LabelScheme::None),
            (Task::Multiclass, LabelScheme::Original),
            (Task::Multiclass, LabelScheme::Abstract),
        ] {
            let v = Verbalizer::new(task, scheme, AbstractSymbols::Digits).unwrap();
            let original =
                Verbalizer::new(task, LabelScheme::Original, AbstractSymbols::Digits).unwrap();
            assert_eq!(v.allowed_labels().len(), original.allowed_labels().len());
            for l in option_order(task) {
                assert_eq!(v.decode(&v.option_name(l)), Some(l));
            }
        }
    }
}
