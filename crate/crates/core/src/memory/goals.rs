use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::MemoryError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GoalStatus {
    InProgress,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Objective {
    pub description: String,
    pub completed: bool,
}

impl Objective {
    pub fn new(description: impl Into<String>) -> Self {
        Self {
            description: description.into(),
            completed: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Goal {
    pub id: String,
    pub room_id: String,
    pub name: String,
    pub status: GoalStatus,
    pub objectives: Vec<Objective>,
}

impl Goal {
    pub fn new(
        id: impl Into<String>,
        room_id: impl Into<String>,
        name: impl Into<String>,
        objectives: impl IntoIterator<Item = Objective>,
    ) -> Self {
        Self {
            id: id.into(),
            room_id: room_id.into(),
            name: name.into(),
            status: GoalStatus::InProgress,
            objectives: objectives.into_iter().collect(),
        }
    }

    fn all_complete(&self) -> bool {
        !self.objectives.is_empty() && self.objectives.iter().all(|o| o.completed)
    }

    // DONE iff every objective is complete; FAILED is sticky.
    fn settle(&mut self) {
        if self.all_complete() {
            self.status = GoalStatus::Done;
        } else if self.status == GoalStatus::Done {
            self.status = GoalStatus::InProgress;
        }
    }
}

#[derive(Debug, Default, Clone, Serialize)]
pub struct GoalBook {
    goals: BTreeMap<String, Goal>,
}

impl GoalBook {
    pub fn create_goal(&mut self, mut goal: Goal) -> Goal {
        goal.settle();
        self.goals.insert(goal.id.clone(), goal.clone());
        goal
    }

    pub fn update_objective(
        &mut self,
        goal_id: &str,
        index: usize,
        completed: bool,
    ) -> Result<Goal, MemoryError> {
        let goal = self
            .goals
            .get_mut(goal_id)
            .ok_or_else(|| MemoryError::UnknownGoal(goal_id.to_owned()))?;
        let len = goal.objectives.len();
        let objective = goal
            .objectives
            .get_mut(index)
            .ok_or(MemoryError::ObjectiveIndexError { index, len })?;
        objective.completed = completed;
        goal.settle();
        Ok(goal.clone())
    }

    pub fn get(&self, goal_id: &str) -> Option<&Goal> {
        self.goals.get(goal_id)
    }

    pub fn in_room<'a>(&'a self, room_id: &'a str) -> impl Iterator<Item = &'a Goal> + 'a {
        self.goals.values().filter(move |g| g.room_id == room_id)
    }

    pub fn len(&self) -> usize {
        self.goals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.goals.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Relationship {
    pub user_a: String,
    pub user_b: String,
    pub strength: f64,
    pub last_interaction: i64,
}

/// One record per unordered pair of users. Serializes as a list ordered by
/// pair, since JSON maps need string keys.
#[derive(Debug, Default, Clone)]
pub struct RelationshipBook {
    pairs: BTreeMap<(String, String), Relationship>,
}

impl Serialize for RelationshipBook {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.pairs.values())
    }
}

fn canonical(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_owned(), b.to_owned())
    } else {
        (b.to_owned(), a.to_owned())
    }
}

impl RelationshipBook {
    pub fn upsert(&mut self, a: &str, b: &str, delta: f64, now_ms: i64) -> Relationship {
        let key = canonical(a, b);
        let entry = self
            .pairs
            .entry(key.clone())
            .or_insert_with(|| Relationship {
                user_a: key.0,
                user_b: key.1,
                strength: 0.0,
                last_interaction: now_ms,
            });
        entry.strength = (entry.strength + delta).clamp(0.0, 1.0);
        entry.last_interaction = now_ms;
        entry.clone()
    }

    pub fn get(&self, a: &str, b: &str) -> Option<&Relationship> {
        self.pairs.get(&canonical(a, b))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}
