pub mod cluster;
pub mod distill;
pub mod finetune;
pub mod report;
pub mod teacher;
