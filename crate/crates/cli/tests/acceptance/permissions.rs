//! Every (gpermission, opermission) pair for the entry user, a member of the
//! owning group and a non-member.

use reta_core::model::{canonical_permission_string, GroupDef, TenantDescriptor, UserDef};
use reta_core::permission::parse_permission_spec;
use reta_core::{
    authorize, effective_permissions, Action, Decision, DenyReason, FieldDef, FieldType, PasswordDigest, Principal,
    SchemaDef, SystemInstance,
};

use crate::Outcome;

const ACTIONS: [(char, Action); 4] = [
    ('C', Action::Create),
    ('R', Action::Read),
    ('U', Action::Update),
    ('D', Action::Delete),
];

/// The sixteen subsets of CRUD, written in CRUD order.
fn subsets() -> Vec<String> {
    (0..16u8)
        .map(|mask| "CRUD".chars().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, c)| c).collect())
        .collect()
}

fn user(userid: &str, group: &str, password: &PasswordDigest) -> UserDef {
    UserDef {
        userid: userid.into(),
        username: userid.into(),
        password: password.clone(),
        memberships: vec![group.into()],
    }
}

pub fn exhaustion() -> Outcome {
    let password = PasswordDigest::new("irrelevant");
    let mut system = SystemInstance::new(TenantDescriptor {
        id: "perm".into(),
        password: password.clone(),
        system_name: "Permissions".into(),
    });
    system.groups = vec![GroupDef { groupid: "owners".into() }, GroupDef { groupid: "others".into() }];
    // the entry user is deliberately outside the owning group
    system.users = vec![
        user("entry", "others", &password),
        user("member", "owners", &password),
        user("outsider", "others", &password),
    ];

    let (mut cases, mut decisions) = (0, 0);
    for g in subsets() {
        for o in subsets() {
            system.schemas = vec![SchemaDef {
                schemaid: "s".into(),
                group: "owners".into(),
                entry: "entry".into(),
                gpermission: parse_permission_spec(&g).map_err(|e| e.to_string())?,
                opermission: parse_permission_spec(&o).map_err(|e| e.to_string())?,
                fields: vec![FieldDef::new("f", FieldType::String)],
            }];
            for (userid, expected) in [("entry", "CRUD"), ("member", g.as_str()), ("outsider", o.as_str())] {
                let actual = effective_permissions(userid, "s", &system).map_err(|e| e.to_string())?;
                ensure!(
                    canonical_permission_string(actual) == expected,
                    "g={g:?} o={o:?} {userid}: got {:?}, expected {expected:?}",
                    canonical_permission_string(actual)
                );
                cases += 1;

                let principal = Principal::User {
                    tenant: "perm".into(),
                    userid: userid.into(),
                };
                for (letter, action) in ACTIONS {
                    let decision = authorize(Some(&principal), action, Some("s"), &system);
                    let want = if expected.contains(letter) {
                        Decision::Allow
                    } else {
                        Decision::Deny(DenyReason::MissingPermission)
                    };
                    ensure!(decision == want, "g={g:?} o={o:?} {userid} {action:?}: {decision:?}");
                    decisions += 1;
                }
                let admin = authorize(Some(&principal), Action::Admin, Some("s"), &system);
                ensure!(!admin.is_allow(), "user {userid} was allowed metadata changes");
            }
        }
    }
    ensure!(cases == 768, "{cases} cases");
    Ok(format!("{cases}/768 permission sets match the rule table; {decisions} authorize decisions agree"))
}
