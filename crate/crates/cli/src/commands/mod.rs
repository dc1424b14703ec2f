pub mod bandit;
pub mod prop1;
pub mod prop2;
pub mod simulate;
pub mod verify;
