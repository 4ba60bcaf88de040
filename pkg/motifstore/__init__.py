"""motifstore: motif-based DNA storage write/read loop at desk scale."""
