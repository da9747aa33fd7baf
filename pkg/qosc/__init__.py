"""QoS-aware semantic service composition over three levels of service abstraction."""
