//! Placeholder; chapter includes land with the guide.
