//! Small deterministic dialogue dataset for tests and demos.
//!
//! Two dialogues are transcribed from published example conversations
//! (ids `6601` and `2049`); the rest are generated so that every workflow
//! has dialogues whose gold actions follow its prescribed sequence.

use crate::dialogue::{Dialogue, Turn};
use crate::kb::{KnowledgeBase, RequirementKind};

const NO_VALUES: [&str; 0] = [];

/// A `recover_password` conversation whose agent follows the workflow.
pub fn password_recovery_dialogue() -> Dialogue {
    Dialogue::new(
        "6601",
        "recover_password",
        vec![
            Turn::agent("Hello, how can i help you today"),
            Turn::customer("Hi I forgot my password to my account. My name is Crystal Minh."),
            Turn::action("pull-up-account", ["crystal minh"]),
            Turn::agent("Okay, could i get your username please"),
            Turn::customer("cm374950"),
            Turn::action("enter-details", ["cm374950"]),
            Turn::action("make-password", NO_VALUES),
            Turn::agent("Okay, here is your new password 3mihalbfbem"),
            Turn::agent("You can log in and change it again if you want to. Is there anything else i can help you with"),
            Turn::customer("great. thanks"),
            Turn::customer("that's all"),
            Turn::agent("Okay, have a nice day"),
        ],
    )
}

/// A conversation labelled `reset_2fa` whose agent actually performs
/// `pull-up-account, verify-identity, make-password`.
pub fn reset_2fa_dialogue() -> Dialogue {
    Dialogue::new(
        "2049",
        "reset_2fa",
        vec![
            Turn::agent("Hi! Thank you for contacting Acme today. How may I help you?"),
            Turn::customer("yes, i can't access my account because i lost my phone"),
            Turn::agent(
                "I am so sorry to hear you lost your phone.  Do you need to get your username and password or do you have one of them?",
            ),
            Turn::customer("can i give you my phone number instead"),
            Turn::agent("Can I first start with your full name?"),
            Turn::customer("Albert Sanders "),
            Turn::action("pull-up-account", ["albert sanders"]),
            Turn::agent("Can you also provide me with your phone number and email address"),
            Turn::customer("i don't have an email. the phone number is 330-822-4754"),
            Turn::agent("Ok, that is fine.  What is your zip code"),
            Turn::customer("69233"),
            Turn::action("verify-identity", ["albert sanders", "69233", "330-822-4754"]),
            Turn::agent("Thank you for all the information.  Your username is asanders1"),
            Turn::customer("ha..of course"),
            Turn::agent("I can not actually view your old password for security reason so I have to create a new one"),
            Turn::customer("ok"),
            Turn::agent("Can I have your account pin or the answer to your security question"),
            Turn::customer("security question answer is Alexander"),
            Turn::agent("Thank you. One moment while I generate the password"),
            Turn::action("make-password", NO_VALUES),
            Turn::agent("Your password is rox6fnwo33e"),
            Turn::customer("ok great"),
            Turn::agent("did you have any other questions today?"),
            Turn::customer("nope. thanks so much!"),
            Turn::agent("You're Welcome.  Have a great day"),
        ],
    )
}

/// A `policy` conversation where the agent inserts `instructions`, an
/// action outside the workflow.
pub fn policy_deviation_dialogue() -> Dialogue {
    Dialogue::new(
        "dev-policy-0",
        "policy",
        vec![
            Turn::agent("Hi, how can I help you?"),
            Turn::customer("What is your policy on late returns?"),
            Turn::action("search-faq", NO_VALUES),
            Turn::action("search-policy", NO_VALUES),
            Turn::agent("Let me walk you through the steps first."),
            Turn::action("instructions", ["late returns"]),
            Turn::customer("ok"),
            Turn::action("select-faq", ["policy_4"]),
            Turn::agent("Returns are accepted for 30 days. Anything else?"),
            Turn::customer("no thanks"),
        ],
    )
}

/// `per_flow` dialogues for every workflow, each executing exactly the
/// workflow's action sequence. Values are derived from slot names, so the
/// output is the same on every call.
pub fn synthetic_dialogues(kb: &KnowledgeBase, per_flow: usize) -> Vec<Dialogue> {
    let mut out = Vec::with_capacity(kb.len() * per_flow);
    for spec in kb.workflows() {
        for n in 0..per_flow {
            let mut turns = vec![
                Turn::agent("Hello, thank you for contacting us. How can I help?"),
                Turn::customer(format!("I need help with {}.", spec.name.replace('_', " "))),
            ];
            for (step, action) in spec.action_sequence.iter().enumerate() {
                let req = kb.action(action).expect("workflow actions are declared");
                let slots: Vec<String> = match req.kind {
                    RequirementKind::None => Vec::new(),
                    _ => req.combinations().into_iter().next().unwrap_or_default(),
                };
                let values: Vec<String> = slots.iter().map(|s| format!("{}-{n}{step}", s.replace('_', "-"))).collect();
                match values.as_slice() {
                    [] => {}
                    [single] => {
                        turns.push(Turn::agent(format!("Could you tell me your {}?", slots[0].replace('_', " "))));
                        turns.push(Turn::customer(format!("Sure, it is {single}.")));
                    }
                    many => {
                        turns.push(Turn::agent("I will need a few details from you."));
                        turns.push(Turn::customer(format!("Here they are: {}", many.join(", "))));
                    }
                }
                turns.push(Turn::action(action.clone(), values));
            }
            turns.push(Turn::agent("Is there anything else I can help you with?"));
            turns.push(Turn::customer("No, that is all."));
            turns.push(Turn::agent("Have a nice day."));
            out.push(Dialogue::new(format!("syn-{}-{n}", spec.name), spec.name.clone(), turns));
        }
    }
    out
}

/// The transcribed dialogues, the deviation dialogue and two generated
/// dialogues per workflow.
pub fn fixture_dataset(kb: &KnowledgeBase) -> Vec<Dialogue> {
    let mut data = vec![password_recovery_dialogue(), reset_2fa_dialogue(), policy_deviation_dialogue()];
    data.extend(synthetic_dialogues(kb, 2));
    data
}
