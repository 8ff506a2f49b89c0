"""Principal Neighbourhood Aggregation and its graph-theory benchmark."""
