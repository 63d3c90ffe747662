//! Rule-based captioners turning observations and actions into short
//! natural-language strings.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::gridworld::{Action, CellView, DoorState, Observation};

/// A single-line, printable-ASCII caption.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Caption(String);

impl TryFrom<String> for Caption {
    type Error = String;

    fn try_from(text: String) -> Result<Self, Self::Error> {
        Caption::new(text).ok_or_else(|| "caption must be non-empty single-line printable ASCII".into())
    }
}

impl From<Caption> for String {
    fn from(c: Caption) -> String {
        c.0
    }
}

impl Caption {
    /// Returns `None` for empty text or text with non-printable characters.
    pub fn new(text: impl Into<String>) -> Option<Caption> {
        let text = text.into();
        let ok = !text.is_empty() && text.chars().all(|c| c.is_ascii() && !c.is_ascii_control());
        ok.then_some(Caption(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl fmt::Display for Caption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for Caption {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

pub fn action_text(action: Action) -> &'static str {
    match action {
        Action::TurnLeft => "turn left",
        Action::TurnRight => "turn right",
        Action::MoveForward => "move forward",
        Action::PickUp => "pick up",
        Action::Drop => "drop",
        Action::Toggle => "toggle",
    }
}

pub fn caption_action(action: Action) -> Caption {
    Caption(action_text(action).to_string())
}

/// Noun phrase for a visible object; `None` for cells that are not objects.
pub fn object_phrase(cell: CellView) -> Option<&'static str> {
    match cell {
        CellView::Key => Some("a key"),
        CellView::Door(DoorState::Locked) => Some("a locked door"),
        CellView::Door(DoorState::Unlocked) => Some("an unlocked door"),
        CellView::Door(DoorState::Open) => Some("an open door"),
        CellView::Empty | CellView::Wall | CellView::OutOfBounds => None,
    }
}

fn tiles(n: i32) -> String {
    if n == 1 {
        "1 tile".to_string()
    } else {
        format!("{n} tiles")
    }
}

/// Egocentric location phrase, e.g. "2 tiles ahead and 1 tile to the left".
pub fn relation_phrase(forward: i32, right: i32) -> String {
    let side = match right.signum() {
        -1 => Some(format!("{} to the left", tiles(-right))),
        1 => Some(format!("{} to the right", tiles(right))),
        _ => None,
    };
    match (forward, side) {
        (0, Some(side)) => side,
        (f, Some(side)) => format!("{} ahead and {side}", tiles(f)),
        (f, None) if f > 0 => format!("{} ahead", tiles(f)),
        _ => "here".to_string(),
    }
}

fn ahead_phrase(cell: CellView) -> &'static str {
    match cell {
        CellView::Empty => "an empty tile",
        CellView::Wall | CellView::OutOfBounds => "a wall",
        other => object_phrase(other).unwrap_or("an empty tile"),
    }
}

/// Describes every visible object (raster order of the view), the cell
/// directly ahead, and whether the agent carries the key.
pub fn caption_observation(obs: &Observation) -> Caption {
    let objects: Vec<String> = obs
        .find(|c| object_phrase(c).is_some())
        .into_iter()
        .map(|(f, r, cell)| {
            format!(
                "{} {}",
                object_phrase(cell).expect("filtered to objects"),
                relation_phrase(f, r)
            )
        })
        .collect();
    let objects = if objects.is_empty() {
        "no objects in view".to_string()
    } else {
        objects.join(", ")
    };
    let carry = if obs.carrying_key {
        "carrying a key"
    } else {
        "empty-handed"
    };
    Caption(format!(
        "{objects}; facing {}; {carry}",
        ahead_phrase(obs.ahead())
    ))
}
