undefined8 FUN_00401283(void)
{
  FUN_00401176("Calling CWE78_OS_Command_Injection__char_environment_system_01_bad()...");
  FUN_00401198();
  FUN_00401176("Finished");
  return 0;
}
