use crate::error::{Error, Result};

const INSTRUCTION: &str = "Please rewrite and expand this definition to make it more detailed \
and consistent with scientific fact. Briefness is required, using only one paragraph.";

/// Request sent to the language model for one class.
pub fn build_prompt(class_name: &str, definition: &str) -> Result<String> {
    if class_name.is_empty() {
        return Err(Error::Argument("class name is empty".into()));
    }
    if definition.is_empty() {
        return Err(Error::Argument(format!("definition of `{class_name}` is empty")));
    }
    Ok(format!(
        "{definition} is the definition of the {class_name}. {INSTRUCTION}"
    ))
}
