"""Empty __init__ for features package"""
