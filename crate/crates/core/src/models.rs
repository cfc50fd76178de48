//! Bundled example nets: the touch-sensitive light controller and its environments.

use crate::format::parse_net;
use crate::net::Net;

pub const CONTROLLER: &str = include_str!("../models/controller.net");
pub const USER: &str = include_str!("../models/user.net");
pub const USER_REACT2: &str = include_str!("../models/user_react2.net");
pub const PAUSING_USER: &str = include_str!("../models/pausing_user.net");
pub const TP2_ENV: &str = include_str!("../models/tp2_env.net");
pub const TP2_ENV_REACT2: &str = include_str!("../models/tp2_env_react2.net");

/// Every bundled file with its name.
pub const ALL: [(&str, &str); 6] = [
    ("controller", CONTROLLER),
    ("user", USER),
    ("user_react2", USER_REACT2),
    ("pausing_user", PAUSING_USER),
    ("tp2_env", TP2_ENV),
    ("tp2_env_react2", TP2_ENV_REACT2),
];

fn load(text: &str) -> Net {
    parse_net(text).expect("bundled model parses")
}

/// SUT: Tidle = 20, Tsw = 4.
pub fn controller() -> Net {
    load(CONTROLLER)
}

/// Unrestricted user with reaction time 0 or 2.
pub fn user(react: u32) -> Net {
    match react {
        0 => load(USER),
        2 => load(USER_REACT2),
        _ => panic!("no bundled user with reaction time {react}"),
    }
}

/// Reaction 2, pause 6.
pub fn pausing_user() -> Net {
    load(PAUSING_USER)
}

/// Restricted environment whose place `OBJECTIF` marks "switched on, then off".
pub fn tp2_env(react: u32) -> Net {
    match react {
        0 => load(TP2_ENV),
        2 => load(TP2_ENV_REACT2),
        _ => panic!("no bundled restricted user with reaction time {react}"),
    }
}
