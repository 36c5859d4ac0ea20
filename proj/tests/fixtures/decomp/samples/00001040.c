void FUN_00001040(void)
{
}
