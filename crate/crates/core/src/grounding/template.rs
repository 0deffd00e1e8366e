//! Symbolic bimanual task templates (`template.json`).

use std::fmt;
use std::fs;
use std::path::Path;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::trajectory::NUM_ARMS;

use super::GroundingError;

/// One side of a contact: an end-effector or a 1-based object index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ContactToken {
    Ee(usize),
    Object(usize),
}

impl ContactToken {
    pub fn swap_arms(self) -> Self {
        match self {
            ContactToken::Ee(j) => ContactToken::Ee(1 - j),
            other => other,
        }
    }
}

impl fmt::Display for ContactToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ContactToken::Ee(j) => write!(f, "ee{j}"),
            ContactToken::Object(k) => write!(f, "{k}"),
        }
    }
}

impl Serialize for ContactToken {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ContactToken::Ee(j) => s.serialize_str(&format!("ee{j}")),
            ContactToken::Object(k) => s.serialize_u64(*k as u64),
        }
    }
}

impl<'de> Deserialize<'de> for ContactToken {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct TokenVisitor;

        impl Visitor<'_> for TokenVisitor {
            type Value = ContactToken;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("\"ee0\", \"ee1\" or an object index")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<ContactToken, E> {
                match v {
                    "ee0" => Ok(ContactToken::Ee(0)),
                    "ee1" => Ok(ContactToken::Ee(1)),
                    other => other
                        .parse::<usize>()
                        .map(ContactToken::Object)
                        .map_err(|_| E::custom(format!("unknown contact token {other:?}"))),
                }
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<ContactToken, E> {
                Ok(ContactToken::Object(v as usize))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<ContactToken, E> {
                if v < 0 {
                    return Err(E::custom(format!("negative object index {v}")));
                }
                Ok(ContactToken::Object(v as usize))
            }
        }

        d.deserialize_any(TokenVisitor)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateAction {
    /// Acting arm for asynchronous stages; `None` for the synchronized action.
    pub arm: Option<usize>,
    pub contact: [ContactToken; 2],
    /// Reference frame: `0` for the task frame, otherwise a 1-based object.
    #[serde(rename = "ref")]
    pub reference: usize,
}

impl TemplateAction {
    /// Object that arm `arm` picks up when it grasps during this action.
    pub fn grasped_object(&self, arm: usize) -> Option<usize> {
        let [a, b] = self.contact;
        for (me, other) in [(a, b), (b, a)] {
            if me == ContactToken::Ee(arm) {
                if let ContactToken::Object(k) = other {
                    return Some(k);
                }
            }
        }
        (self.reference > 0).then_some(self.reference)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage {
    pub sync: bool,
    pub actions: Vec<TemplateAction>,
}

impl Stage {
    /// The action driving `arm` in this stage, if any.
    pub fn action_for(&self, arm: usize) -> Option<&TemplateAction> {
        if self.sync {
            self.actions.first()
        } else {
            self.actions.iter().find(|a| a.arm == Some(arm))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskTemplate {
    pub num_objects: usize,
    pub stages: Vec<Stage>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    NoObjects,
    NoStages,
    EmptyStage,
    ReferenceOutOfRange,
    ObjectOutOfRange,
    SelfContact,
    SyncActionCount,
    SyncNamesArm,
    AsyncMissingArm,
    AsyncArmOutOfRange,
    DuplicateArm,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateViolation {
    pub stage: Option<usize>,
    pub kind: ViolationKind,
    pub message: String,
}

impl fmt::Display for TemplateViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.stage {
            Some(i) => write!(f, "stage {i}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl TaskTemplate {
    /// Every invariant violation; empty iff the template is usable.
    pub fn validate(&self) -> Vec<TemplateViolation> {
        let mut out = Vec::new();
        let mut push = |stage: Option<usize>, kind, message: String| {
            out.push(TemplateViolation { stage, kind, message })
        };
        if self.num_objects == 0 {
            push(None, ViolationKind::NoObjects, "template declares no objects".into());
        }
        if self.stages.is_empty() {
            push(None, ViolationKind::NoStages, "template has no stages".into());
        }
        for (i, stage) in self.stages.iter().enumerate() {
            let s = Some(i);
            if stage.actions.is_empty() {
                push(s, ViolationKind::EmptyStage, "stage has no actions".into());
            }
            if stage.sync {
                if stage.actions.len() > 1 {
                    push(
                        s,
                        ViolationKind::SyncActionCount,
                        format!("synchronized stage must have exactly one action, found {}", stage.actions.len()),
                    );
                }
                if stage.actions.iter().any(|a| a.arm.is_some()) {
                    push(s, ViolationKind::SyncNamesArm, "synchronized action must not name an arm".into());
                }
            } else {
                let mut seen = [false; NUM_ARMS];
                for a in &stage.actions {
                    match a.arm {
                        None => push(s, ViolationKind::AsyncMissingArm, "asynchronous action without an arm".into()),
                        Some(j) if j >= NUM_ARMS => {
                            push(s, ViolationKind::AsyncArmOutOfRange, format!("arm {j} out of range"))
                        }
                        Some(j) => {
                            if seen[j] {
                                push(s, ViolationKind::DuplicateArm, format!("arm {j} has more than one action"));
                            }
                            seen[j] = true;
                        }
                    }
                }
            }
            for a in &stage.actions {
                if a.reference > self.num_objects {
                    push(
                        s,
                        ViolationKind::ReferenceOutOfRange,
                        format!("reference out of range: {} > {}", a.reference, self.num_objects),
                    );
                }
                for tok in a.contact {
                    if let ContactToken::Object(k) = tok {
                        if k == 0 || k > self.num_objects {
                            push(s, ViolationKind::ObjectOutOfRange, format!("contact object {k} out of range 1..={}", self.num_objects));
                        }
                    }
                }
                if a.contact[0] == a.contact[1] {
                    push(s, ViolationKind::SelfContact, format!("contact pairs {} with itself", a.contact[0]));
                }
            }
        }
        out
    }

    pub fn ensure_valid(&self) -> Result<(), GroundingError> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(GroundingError::InvalidTemplate(v))
        }
    }

    /// Arm that first makes contact with object `k` in an asynchronous stage.
    pub fn assigned_arm(&self, object: usize) -> Option<usize> {
        self.stages.iter().filter(|s| !s.sync).flat_map(|s| &s.actions).find_map(|a| {
            let j = a.arm?;
            a.contact.contains(&ContactToken::Ee(j)).then_some(())?;
            a.contact.contains(&ContactToken::Object(object)).then_some(j)
        })
    }

    /// The same task with the roles of the two arms exchanged.
    pub fn swap_arms(&self) -> TaskTemplate {
        TaskTemplate {
            num_objects: self.num_objects,
            stages: self
                .stages
                .iter()
                .map(|s| Stage {
                    sync: s.sync,
                    actions: s
                        .actions
                        .iter()
                        .map(|a| TemplateAction {
                            arm: a.arm.map(|j| 1 - j),
                            contact: [a.contact[0].swap_arms(), a.contact[1].swap_arms()],
                            reference: a.reference,
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, GroundingError> {
        let text = fs::read_to_string(path).map_err(|source| GroundingError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| GroundingError::Json {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("template serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two objects: each arm grasps one object, then a synchronized pour relative to object 2.
    pub(crate) const POUR_JSON: &str = r#"{
        "num_objects": 2,
        "stages": [
            {"sync": false, "actions": [
                {"arm": 0, "contact": ["ee0", 1], "ref": 1},
                {"arm": 1, "contact": ["ee1", 2], "ref": 2}
            ]},
            {"sync": true, "actions": [
                {"arm": null, "contact": [1, 2], "ref": 2}
            ]}
        ]
    }"#;

    #[test]
    fn pour_template_is_valid() {
        let t: TaskTemplate = serde_json::from_str(POUR_JSON).unwrap();
        assert!(t.validate().is_empty(), "{:?}", t.validate());
        assert_eq!(t.assigned_arm(1), Some(0));
        assert_eq!(t.assigned_arm(2), Some(1));
        assert_eq!(t.stages[0].action_for(1).unwrap().grasped_object(1), Some(2));
        let back: TaskTemplate = serde_json::from_str(&t.to_json()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn reference_out_of_range() {
        let mut t: TaskTemplate = serde_json::from_str(POUR_JSON).unwrap();
        t.stages[1].actions[0].reference = 5;
        let v = t.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ViolationKind::ReferenceOutOfRange);
        assert_eq!(v[0].stage, Some(1));
        assert!(v[0].to_string().contains("reference out of range"));
    }

    #[test]
    fn two_actions_for_one_arm() {
        let mut t: TaskTemplate = serde_json::from_str(POUR_JSON).unwrap();
        t.stages[0].actions[1].arm = Some(0);
        let v = t.validate();
        assert!(v.iter().any(|x| x.kind == ViolationKind::DuplicateArm && x.stage == Some(0)));
    }

    #[test]
    fn bad_tokens_rejected_at_load() {
        let bad = POUR_JSON.replace("\"ee1\"", "\"ee7\"");
        assert!(serde_json::from_str::<TaskTemplate>(&bad).is_err());
    }

    #[test]
    fn swap_is_an_involution() {
        let t: TaskTemplate = serde_json::from_str(POUR_JSON).unwrap();
        let s = t.swap_arms();
        assert_eq!(s.assigned_arm(1), Some(1));
        assert_eq!(s.swap_arms(), t);
    }
}
