"""Pipeline for training and evaluating a binary referable-diabetic-retinopathy
detector from retinal fundus photographs."""

__version__ = "0.1.0"
