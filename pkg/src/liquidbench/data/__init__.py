from liquidbench.data.batch import SequenceBatch, SequenceDataset, collate

__all__ = ["SequenceBatch", "SequenceDataset", "collate"]
