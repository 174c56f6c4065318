pub mod balance;
pub mod bench;
pub mod chem;
pub mod cli;
pub mod curation;
pub mod decode;
pub mod equiv;
pub mod reaction;
pub mod rules;
pub mod split;
